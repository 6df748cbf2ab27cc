#pragma once

// Activation-trace interchange: a trace file carries one generation record —
// prompt, sampled tokens, per-position hidden states, attention rows, and step
// logits — so the lens and lookback analyses can run on records produced by an
// external runtime that writes the same schema.
//
// Layout (schema "lenslab-trace/1"): the first line is a JSON header with the
// shape declarations, the vocab hash, and the generation settings. In jsonl
// mode it is followed by one JSON line per generation step whose f32 payloads
// are base64 of the little-endian bytes. In binary mode the header line is
// followed by the same tensors as a raw little-endian f32 stream (the
// checkpoint encoding), shapes implied by the header. The hidden states of the
// final prompt position (step 0, before any token is generated) live in the
// header, keeping body records one-per-step.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lenslab/common.hpp"
#include "lenslab/model.hpp"
#include "lenslab/vocab.hpp"

namespace lenslab {

inline constexpr std::string_view kTraceSchema = "lenslab-trace/1";

enum class TraceMode { jsonl, binary };

namespace detail {

inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::span<const unsigned char> in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= in.size(); i += 3) {
    const uint32_t v = (uint32_t(in[i]) << 16) | (uint32_t(in[i + 1]) << 8) | in[i + 2];
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += kB64Alphabet[v & 63];
  }
  if (i + 1 == in.size()) {
    const uint32_t v = uint32_t(in[i]) << 16;
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == in.size()) {
    const uint32_t v = (uint32_t(in[i]) << 16) | (uint32_t(in[i + 1]) << 8);
    out += kB64Alphabet[(v >> 18) & 63];
    out += kB64Alphabet[(v >> 12) & 63];
    out += kB64Alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::string base64_decode(std::string_view in) {
  static const auto table = [] {
    std::array<int8_t, 256> t;
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kB64Alphabet[i])] = int8_t(i);
    return t;
  }();
  if (in.size() % 4 != 0) throw IoError("bad base64 length");
  std::string out;
  out.reserve(in.size() / 4 * 3);
  for (size_t i = 0; i < in.size(); i += 4) {
    int pad = 0;
    uint32_t v = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = in[i + j];
      if (c == '=') {
        if (i + 4 != in.size() || j < 2) throw IoError("bad base64 padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) throw IoError("bad base64 padding");
      const int8_t d = table[static_cast<unsigned char>(c)];
      if (d < 0) throw IoError("bad base64 character");
      v = (v << 6) | uint32_t(d);
    }
    out += char((v >> 16) & 0xFF);
    if (pad < 2) out += char((v >> 8) & 0xFF);
    if (pad < 1) out += char(v & 0xFF);
  }
  return out;
}

inline std::string b64_f32(std::span<const float> xs) {
  std::string bytes;
  bytes.reserve(xs.size() * 4);
  for (float x : xs) io::put_f32(bytes, x);
  return base64_encode({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
}

inline std::vector<float> f32_from_b64(std::string_view b64, size_t expect, const std::string& what) {
  const std::string bytes = base64_decode(b64);
  if (bytes.size() != expect * 4)
    throw IoError(what + ": expected " + std::to_string(expect) + " floats, got " +
                  std::to_string(bytes.size() / 4));
  io::Reader r(bytes);
  std::vector<float> out(expect);
  for (auto& x : out) x = r.f32();
  return out;
}

inline nlohmann::ordered_json trace_header(const GenerationRecord& rec, TraceMode mode) {
  nlohmann::ordered_json h;
  h["schema"] = std::string(kTraceSchema);
  h["mode"] = mode == TraceMode::jsonl ? "jsonl" : "binary";
  h["n_layers"] = rec.n_layers;
  h["n_heads"] = rec.n_heads;
  h["d_model"] = rec.d_model;
  h["vocab_size"] = rec.vocab_size;
  h["vocab_hash"] = vocab().hash();
  h["context_len"] = rec.context_len;
  h["prompt"] = rec.prompt;
  h["generated"] = rec.generated;
  h["temperature"] = rec.temperature;
  h["seed"] = rec.seed;
  // step-0 activations: hidden states of the last prompt position
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int l = 0; l <= rec.n_layers; ++l)
    rows.push_back(b64_f32({rec.hidden[0].row(l), static_cast<size_t>(rec.d_model)}));
  h["prompt_hidden"] = std::move(rows);
  return h;
}

inline void check_record_shapes(const GenerationRecord& rec) {
  if (rec.n_layers < 1 || rec.n_heads < 1 || rec.d_model < 1 || rec.vocab_size < 1)
    throw std::invalid_argument("export_trace: record is missing its shape fields");
  if (rec.context_len != static_cast<int>(rec.prompt.size()))
    throw std::invalid_argument("export_trace: context_len does not match prompt");
  const size_t T = rec.generated.size();
  if (rec.hidden.size() != T + 1 || rec.step_logits.size() != T || rec.attn.size() != T)
    throw std::invalid_argument("export_trace: record tensors do not cover every step");
}

}  // namespace detail

inline std::string encode_trace(const GenerationRecord& rec, TraceMode mode = TraceMode::jsonl) {
  detail::check_record_shapes(rec);
  const int L = rec.n_layers, H = rec.n_heads, d = rec.d_model;
  std::string out = detail::trace_header(rec, mode).dump();
  out += '\n';
  const int T = rec.gen_len();
  if (mode == TraceMode::jsonl) {
    for (int t = 1; t <= T; ++t) {
      nlohmann::ordered_json b;
      b["t"] = t;
      b["token"] = rec.generated[static_cast<size_t>(t - 1)];
      nlohmann::ordered_json hid = nlohmann::ordered_json::array();
      const Mat<float>& hm = rec.hidden[static_cast<size_t>(t)];
      for (int l = 0; l <= L; ++l)
        hid.push_back(detail::b64_f32({hm.row(l), static_cast<size_t>(d)}));
      b["hidden"] = std::move(hid);
      nlohmann::ordered_json attn = nlohmann::ordered_json::array();
      for (int l = 0; l < L; ++l)
        for (int h = 0; h < H; ++h) attn.push_back(detail::b64_f32(rec.full_row(t, l, h)));
      b["attn"] = std::move(attn);
      b["logits"] = detail::b64_f32(rec.logits_for_step(t));
      out += b.dump();
      out += '\n';
    }
  } else {
    for (int t = 1; t <= T; ++t) {
      io::put_u32(out, static_cast<uint32_t>(rec.generated[static_cast<size_t>(t - 1)]));
      const Mat<float>& hm = rec.hidden[static_cast<size_t>(t)];
      for (int l = 0; l <= L; ++l)
        for (int j = 0; j < d; ++j) io::put_f32(out, hm.at(l, j));
      for (int l = 0; l < L; ++l)
        for (int h = 0; h < H; ++h)
          for (float a : rec.full_row(t, l, h)) io::put_f32(out, a);
      for (float z : rec.logits_for_step(t)) io::put_f32(out, z);
    }
  }
  return out;
}

inline GenerationRecord decode_trace(std::string_view text) {
  const size_t nl = text.find('\n');
  if (nl == std::string_view::npos) throw IoError("trace header line missing");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(text.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("trace header is not valid JSON: ") + e.what());
  }
  try {
    if (h.at("schema").get<std::string>() != kTraceSchema)
      throw IoError("unsupported trace schema \"" + h.at("schema").get<std::string>() + "\"");
    const std::string mode = h.at("mode").get<std::string>();
    if (mode != "jsonl" && mode != "binary")
      throw IoError("unknown trace mode \"" + mode + "\"");

    GenerationRecord rec;
    rec.n_layers = h.at("n_layers").get<int>();
    rec.n_heads = h.at("n_heads").get<int>();
    rec.d_model = h.at("d_model").get<int>();
    rec.vocab_size = h.at("vocab_size").get<int>();
    rec.context_len = h.at("context_len").get<int>();
    rec.prompt = h.at("prompt").get<std::vector<int>>();
    rec.generated = h.at("generated").get<std::vector<int>>();
    rec.temperature = h.at("temperature").get<double>();
    rec.seed = h.at("seed").get<uint64_t>();
    const int L = rec.n_layers, H = rec.n_heads, d = rec.d_model, V = rec.vocab_size;
    const int N = rec.context_len, T = static_cast<int>(rec.generated.size());
    if (L < 1 || H < 1 || d < 1 || V < 1 || N < 1 || N != static_cast<int>(rec.prompt.size()))
      throw IoError("trace header declares inconsistent shapes");

    const auto unpack_hidden = [&](const nlohmann::json& rows, const std::string& what) {
      if (!rows.is_array() || static_cast<int>(rows.size()) != L + 1)
        throw IoError(what + ": expected " + std::to_string(L + 1) + " hidden rows");
      Mat<float> m(L + 1, d);
      for (int l = 0; l <= L; ++l) {
        const auto row =
            detail::f32_from_b64(rows[static_cast<size_t>(l)].get<std::string>(), d, what);
        std::copy(row.begin(), row.end(), m.row(l));
      }
      return m;
    };

    rec.hidden.push_back(unpack_hidden(h.at("prompt_hidden"), "trace header prompt_hidden"));

    if (mode == "jsonl") {
      size_t pos = nl + 1;
      for (int t = 1; t <= T; ++t) {
        const std::string what = "trace body record " + std::to_string(t);
        const size_t end = text.find('\n', pos);
        if (pos >= text.size() || end == std::string_view::npos) throw IoError("truncated file");
        nlohmann::json b = nlohmann::json::parse(text.substr(pos, end - pos));
        pos = end + 1;
        if (b.at("t").get<int>() != t) throw IoError(what + ": out-of-order step");
        if (b.at("token").get<int>() != rec.generated[static_cast<size_t>(t - 1)])
          throw IoError(what + ": token does not match header");
        rec.hidden.push_back(unpack_hidden(b.at("hidden"), what));
        const auto& attn = b.at("attn");
        if (!attn.is_array() || static_cast<int>(attn.size()) != L * H)
          throw IoError(what + ": expected " + std::to_string(L * H) + " attention rows");
        std::vector<std::vector<float>> rows;
        for (int i = 0; i < L * H; ++i)
          rows.push_back(detail::f32_from_b64(attn[static_cast<size_t>(i)].get<std::string>(),
                                              static_cast<size_t>(N + t), what));
        rec.attn.push_back(std::move(rows));
        rec.step_logits.push_back(
            detail::f32_from_b64(b.at("logits").get<std::string>(), static_cast<size_t>(V), what));
      }
      if (pos != text.size()) throw IoError("trailing bytes in trace file");
    } else {
      const std::string body(text.substr(nl + 1));
      io::Reader r(body);
      for (int t = 1; t <= T; ++t) {
        const std::string what = "trace body record " + std::to_string(t);
        if (static_cast<int>(r.u32()) != rec.generated[static_cast<size_t>(t - 1)])
          throw IoError(what + ": token does not match header");
        Mat<float> m(L + 1, d);
        for (int l = 0; l <= L; ++l)
          for (int j = 0; j < d; ++j) m.at(l, j) = r.f32();
        rec.hidden.push_back(std::move(m));
        std::vector<std::vector<float>> rows(static_cast<size_t>(L) * H);
        for (auto& row : rows) {
          row.resize(static_cast<size_t>(N + t));
          for (auto& a : row) a = r.f32();
        }
        rec.attn.push_back(std::move(rows));
        std::vector<float> logits(static_cast<size_t>(V));
        for (auto& z : logits) z = r.f32();
        rec.step_logits.push_back(std::move(logits));
      }
      if (!r.eof()) throw IoError("trailing bytes in trace file");
    }
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed trace: ") + e.what());
  }
}

inline void export_trace(const std::filesystem::path& path, const GenerationRecord& rec,
                         TraceMode mode = TraceMode::jsonl) {
  write_file_atomic(path, encode_trace(rec, mode));
}

inline GenerationRecord import_trace(const std::filesystem::path& path) {
  return decode_trace(read_file(path));
}

}  // namespace lenslab
