#pragma once

#include <array>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lenslab/common.hpp"

// Closed whitespace-token vocabulary for the synthetic sentiment task.
// Ids 0..3 are reserved; everything else is a fixed word list baked in below,
// so token ids are stable across runs and machines.

namespace lenslab {

namespace detail {

inline const std::vector<std::string>& vocab_words() {
  static const std::vector<std::string> w = {
    "the", "sentiment", "of", "above", "review", "is", "because", "it", "uses", "words",
    "like", "and", "positive", "negative", "random", "practice", "makes", "better", "when", "one",
    "sees", ",", ".", "great", "wonderful", "brilliant", "delightful", "superb", "charming", "gripping",
    "moving", "stunning", "heartfelt", "dazzling", "inspired", "refreshing", "thrilling", "elegant", "masterful", "captivating",
    "joyful", "vibrant", "imaginative", "graceful", "rewarding", "luminous", "tender", "witty", "soulful", "riveting",
    "sublime", "spirited", "enchanting", "dull", "awful", "boring", "tedious", "bland", "clumsy", "hollow",
    "lifeless", "shallow", "grating", "messy", "sloppy", "painful", "dreary", "forgettable", "stale", "wooden",
    "lazy", "annoying", "pointless", "muddled", "tiresome", "crude", "joyless", "leaden", "drab", "dismal",
    "lousy", "insufferable", "exhausting", "movie", "was", "film", "i", "found", "plot", "overall",
    "critics", "call", "acting", "felt", "throughout", "a", "story", "with", "pacing", "script",
    "seemed", "to", "me", "every", "scene", "looked", "cast", "gave", "performance", "its",
    "ending", "dialogue", "sounded", "such", "picture", "direction", "at", "best", "truly", "experience",
    "cinema", "soundtrack", "visuals", "this", "sequel", "compared", "original", "characters", "from", "start",
    "finish", "what", "piece", "filmmaking", "humor", "lands", "time", "premise", "writing", "editing",
    "came", "across", "arc", "by", "end", "viewers", "will", "find", "trailer", "lead",
    "actor", "in", "frame", "opening", "act", "while", "finale", "camera", "work", "stayed",
    "for", "two", "hours", "remake", "turned", "out", "drama", "about", "ordinary", "people",
    "animation", "big", "screen", "ran", "middle", "costumes", "appeared", "documentary", "narration", "times",
    "screenplay", "reads", "on", "paper", "stunts", "were", "if", "nothing", "else", "thriller",
    "twist", "chemistry", "between", "leads", "made", "shot", "lighting", "festival", "crowd", "matinee",
    "showing", "today", "honest", "night", "worth", "long", "week", "popcorn", "hand", "against",
    "expectations", "rainy", "sunday", "despite", "hype", "you", "second", "reel", "crowded", "theater",
    "before", "credits", "rolled", "late", "over", "weekend", "tone", "speaks", "itself", "simply",
    "comes", "general", "mood", "carries", "day", "everything", "points", "way", "whole", "thing",
    "first", "line", "style", "obvious", "can", "just", "tell", "phrasing", "wording", "gives",
    "away", "follows", "written", "impression", "unmistakable", "that", "how", "apple", "river", "mountain",
    "garden", "window", "table", "chair", "bridge", "castle", "forest", "meadow", "ocean", "island",
    "valley", "desert", "harbor", "village", "city", "street", "road", "corner", "market", "bakery",
    "library", "museum", "station", "airport", "train", "ticket", "journey", "travel", "summer", "winter",
    "spring", "autumn", "morning", "evening", "afternoon", "noon", "midnight", "clock", "watch", "calendar",
    "letter", "pencil", "notebook", "bottle", "glass", "plate", "spoon", "fork", "knife", "kitchen",
    "bedroom", "ceiling", "floor", "wall", "door", "roof", "cellar", "attic", "stair", "lamp",
    "candle", "mirror", "carpet", "curtain", "blanket", "pillow", "basket", "bucket", "rope", "ladder",
    "hammer", "nail", "wheel", "engine", "motor", "wagon", "bicycle", "boat", "sail", "anchor",
    "compass", "map", "globe", "cliff", "cave", "stone", "pebble", "sand", "wave", "tide",
    "current", "breeze", "storm", "thunder", "lightning", "rainbow", "cloud", "mist", "fog", "frost",
    "snow", "ice", "fire", "flame", "smoke", "ash", "ember", "coal", "iron", "copper",
    "silver", "gold", "bronze", "marble", "granite", "clay", "brick", "timber", "plank", "board",
    "beam", "post", "fence", "gate", "yard", "lawn", "hedge", "bush", "tree", "branch",
    "leaf", "root", "seed", "flower", "petal", "stem", "thorn", "berry", "grape", "cherry",
    "peach", "plum", "pear", "lemon", "orange", "melon", "walnut", "almond", "honey", "sugar",
    "salt", "pepper", "flour", "bread", "butter", "cheese", "milk", "cream", "egg", "soup",
    "stew", "salad", "rice", "pasta", "noodle", "sauce", "roast", "grill", "oven", "stove",
    "pan", "pot", "kettle", "cup", "mug", "jar", "tin", "box", "crate", "shelf",
    "drawer", "cabinet", "closet", "jacket", "coat", "scarf", "glove", "boot", "shoe", "sock",
    "button", "pocket", "collar", "sleeve", "fabric", "cotton", "wool", "silk", "linen", "leather",
    "thread", "needle", "ribbon", "badge", "medal", "trophy", "prize", "token", "coin", "purse",
    "wallet", "suitcase", "backpack", "umbrella", "cane", "runner", "swimmer", "dancer", "singer", "painter",
    "writer", "reader", "teacher", "student", "doctor", "nurse", "farmer", "baker", "tailor", "carpenter",
    "driver", "pilot", "sailor", "soldier", "guard", "ranger", "hunter", "miner", "smith", "clerk",
    "judge", "lawyer", "mayor", "king", "queen", "knight", "wizard", "giant", "dragon", "falcon",
    "eagle", "hawk", "owl", "raven", "sparrow", "robin", "heron", "crane", "swan", "goose",
    "duck", "hen", "rooster", "pigeon", "parrot", "fox", "wolf", "bear", "deer", "rabbit",
    "hare", "squirrel", "otter", "badger", "hedgehog", "mole", "mouse", "rat", "bat", "cat",
    "dog", "horse", "pony", "donkey", "cow", "goat", "sheep", "lamb", "pig", "camel",
    "lion", "tiger", "leopard", "zebra", "giraffe", "elephant", "whale", "dolphin", "seal", "penguin",
    "turtle", "lizard", "snake", "frog", "toad", "beetle", "cricket", "spider", "feather", "fur",
    "wing", "beak", "tail", "north", "south", "east", "west", "left", "right", "up",
    "down", "near", "far", "high", "low", "deep", "wide", "narrow", "thick", "thin",
    "heavy", "light", "fast", "slow", "early", "soon", "later", "often", "rarely", "always",
    "never", "perhaps", "maybe", "certainly", "surely", "indeed", "quite", "rather", "fairly", "nearly",
    "almost", "hardly", "barely", "roughly", "exactly", "mostly", "partly", "fully", "half", "quarter",
    "double", "single", "few", "several", "many", "much", "more", "most", "less", "least",
    "enough", "extra", "same", "other", "another", "each", "either", "neither", "both", "all",
    "some", "any", "none",
  };
  return w;
}

}  // namespace detail

class Vocab {
 public:
  Vocab() {
    words_ = {"[PAD]", "[BOS]", "[EOS]", "[UNK]"};
    const auto& base = detail::vocab_words();
    words_.insert(words_.end(), base.begin(), base.end());
    for (int i = 0; i < static_cast<int>(words_.size()); ++i) index_[words_[i]] = i;
  }

  int size() const { return static_cast<int>(words_.size()); }

  int id(std::string_view w) const {
    auto it = index_.find(std::string(w));
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(std::string_view w) const { return index_.count(std::string(w)) > 0; }

  const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }

  // Whitespace tokenization; unknown words map to [UNK].
  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    std::istringstream ss{std::string(text)};
    std::string tok;
    while (ss >> tok) ids.push_back(id(tok));
    return ids;
  }

  std::string decode(std::span<const int> ids, bool skip_reserved = true) const {
    std::string out;
    for (int t : ids) {
      if (skip_reserved && t < 4) continue;
      if (!out.empty()) out += ' ';
      out += word(t);
    }
    return out;
  }

  int positive_id() const { return id("positive"); }
  int negative_id() const { return id("negative"); }
  int label_id(bool positive) const { return positive ? positive_id() : negative_id(); }

  // Stable digest of the word list; stored in trace headers so a reader can
  // detect a vocabulary mismatch.
  uint64_t hash() const {
    std::string joined;
    for (const auto& w : words_) {
      joined += w;
      joined += '\n';
    }
    return fnv1a64(joined);
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

inline const Vocab& vocab() {
  static const Vocab v;
  return v;
}

// Sentiment lexicon driving the review grammar; also consulted when checking
// whether an explanation cites evidence words.
inline std::span<const std::string_view> positive_lexicon() {
  static constexpr std::array<std::string_view, 30> w = {
      "great",      "wonderful",  "brilliant", "delightful", "superb",
      "charming",   "gripping",   "moving",    "stunning",   "heartfelt",
      "dazzling",   "inspired",   "refreshing", "thrilling", "elegant",
      "masterful",  "captivating", "joyful",   "vibrant",    "imaginative",
      "graceful",   "rewarding",  "luminous",  "tender",     "witty",
      "soulful",    "riveting",   "sublime",   "spirited",   "enchanting"};
  return {w.data(), w.size()};
}

inline std::span<const std::string_view> negative_lexicon() {
  static constexpr std::array<std::string_view, 30> w = {
      "dull",      "awful",      "boring",   "tedious",     "bland",
      "clumsy",    "hollow",     "lifeless", "shallow",     "grating",
      "messy",     "sloppy",     "painful",  "dreary",      "forgettable",
      "stale",     "wooden",     "lazy",     "annoying",    "pointless",
      "muddled",   "tiresome",   "crude",    "joyless",     "leaden",
      "drab",      "dismal",     "lousy",    "insufferable", "exhausting"};
  return {w.data(), w.size()};
}

}  // namespace lenslab
