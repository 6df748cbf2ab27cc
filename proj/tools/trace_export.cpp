// Generate from a checkpoint and export the run as a trace file, so the
// lens/lookback subcommands (or any other consumer) can replay it:
//
//   trace_export --checkpoint out/seed_1/model.bin \
//       --prompt "the pacing was excellent" --max-new 12 -o run.trace.jsonl
//   lenslab lookback --trace run.trace.jsonl

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "lenslab/lenslab.hpp"

int main(int argc, char** argv) {
  CLI::App app{"export a generation trace from a lenslab checkpoint"};
  std::string checkpoint, prompt_text, out_path, mode = "jsonl";
  int max_new = 12;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  bool scaffold = false;
  app.add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  app.add_option("--prompt", prompt_text, "review text (unknown words become [UNK])")
      ->required();
  app.add_option("--max-new", max_new)->check(CLI::PositiveNumber);
  app.add_option("--temperature", temperature)->check(CLI::NonNegativeNumber);
  app.add_option("--seed", seed);
  app.add_option("--mode", mode)->check(CLI::IsMember({"jsonl", "binary"}));
  app.add_flag("--scaffold", scaffold, "append the rationale scaffold before generating");
  app.add_option("-o,--out", out_path)->required();
  CLI11_PARSE(app, argc, argv);

  try {
    const lenslab::Parameters params = lenslab::load_checkpoint(checkpoint);
    std::vector<int> prompt{lenslab::kBosId};
    for (int id : lenslab::vocab().encode(prompt_text)) prompt.push_back(id);
    if (scaffold)
      for (int id : lenslab::vocab().encode(lenslab::kRationaleScaffold)) prompt.push_back(id);
    const lenslab::GenerationRecord rec =
        lenslab::generate(params, prompt, max_new, temperature, seed);
    const auto m = mode == "binary" ? lenslab::TraceMode::binary : lenslab::TraceMode::jsonl;
    lenslab::export_trace(out_path, rec, m);
    std::cerr << "wrote " << out_path << " (" << rec.gen_len() << " generated steps)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "trace_export: " << e.what() << "\n";
    return 1;
  }
}
