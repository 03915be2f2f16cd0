#include "metaccent/data/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "metaccent/error.hpp"
#include "metaccent/io/tensor_file.hpp"
#include "metaccent/rng.hpp"

namespace metaccent::data {

namespace {

using nlohmann::json;

std::string accent_name(int i) {
  std::string s = "syn_";
  s += static_cast<char>('a' + i % 26);
  if (i >= 26) s += std::to_string(i / 26);
  return s;
}

std::string word_text(Rng& rng, const std::set<std::string>& taken) {
  static const char letters[] = "abdegiklmnorstu";
  for (;;) {
    const std::size_t len = 2 + rng.below(3);
    std::string w;
    for (std::size_t i = 0; i < len; ++i)
      w += letters[rng.below(sizeof(letters) - 1)];
    if (!taken.count(w)) return w;
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (n_accents < 1 || n_utterances_per_accent < 1 || base_vocab_size < 1 ||
      feature_dim < 1)
    throw ConfigError("data.synthetic: counts must be >= 1");
  if (n_train_accents + n_val_accents >= n_accents)
    throw ConfigError("data.synthetic: train + val accents (" +
                      std::to_string(n_train_accents + n_val_accents) +
                      ") leave no test accents out of " +
                      std::to_string(n_accents));
  if (word_min_frames < 1 || word_max_frames < word_min_frames)
    throw ConfigError("data.synthetic: bad word frame range");
  if (words_per_utterance_min < 1 ||
      words_per_utterance_max < words_per_utterance_min)
    throw ConfigError("data.synthetic: bad words-per-utterance range");
  if (noise_std < 0 || duration_jitter < 0 || duration_jitter >= 1)
    throw ConfigError("data.synthetic: bad noise/jitter");
}

std::vector<std::string> SyntheticCorpus::all_accents() const {
  std::vector<std::string> out = train_accents;
  out.insert(out.end(), val_accents.begin(), val_accents.end());
  out.insert(out.end(), test_accents.begin(), test_accents.end());
  return out;
}

const SyntheticAccentSpec& SyntheticCorpus::spec_of(
    const std::string& accent_id) const {
  for (const auto& s : specs)
    if (s.accent_id == accent_id) return s;
  throw ConfigError("data.synthetic: no spec for accent '" + accent_id + "'");
}

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  SyntheticCorpus corpus;
  corpus.config = cfg;

  // word templates
  {
    Rng rng = root.split("words");
    std::set<std::string> taken;
    for (int wi = 0; wi < cfg.base_vocab_size; ++wi) {
      WordTemplate w;
      w.text = word_text(rng, taken);
      taken.insert(w.text);
      w.n_frames =
          cfg.word_min_frames +
          static_cast<int>(rng.below(cfg.word_max_frames - cfg.word_min_frames + 1));
      w.frames.resize(static_cast<std::size_t>(w.n_frames) * cfg.feature_dim);
      for (auto& v : w.frames) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      corpus.words.push_back(std::move(w));
    }
  }

  // shared sentences
  {
    Rng rng = root.split("sentences");
    corpus.sentences.resize(cfg.n_utterances_per_accent);
    for (auto& sent : corpus.sentences) {
      const std::size_t n =
          cfg.words_per_utterance_min +
          rng.below(cfg.words_per_utterance_max - cfg.words_per_utterance_min + 1);
      for (std::size_t k = 0; k < n; ++k)
        sent.push_back(static_cast<int>(rng.below(cfg.base_vocab_size)));
    }
  }

  // accent channel specs
  for (int a = 0; a < cfg.n_accents; ++a) {
    SyntheticAccentSpec spec;
    spec.accent_id = accent_name(a);
    spec.noise_std = cfg.noise_std;
    spec.token_duration_jitter = cfg.duration_jitter;
    spec.bin_gains.assign(cfg.feature_dim, 1.0f);
    spec.bin_permutation.resize(cfg.feature_dim);
    for (int b = 0; b < cfg.feature_dim; ++b) spec.bin_permutation[b] = b;
    if (!cfg.identity_transforms) {
      Rng rng = root.split("accent." + spec.accent_id);
      for (auto& g : spec.bin_gains)
        g = static_cast<float>(
            std::exp(rng.uniform(-cfg.gain_log_range, cfg.gain_log_range)));
      for (int s = 0; s < cfg.bin_swaps; ++s) {
        const int i = static_cast<int>(rng.below(cfg.feature_dim));
        const int j = static_cast<int>(rng.below(cfg.feature_dim));
        std::swap(spec.bin_permutation[i], spec.bin_permutation[j]);
      }
    }
    corpus.specs.push_back(std::move(spec));
    const std::string id = accent_name(a);
    if (a < cfg.n_train_accents)
      corpus.train_accents.push_back(id);
    else if (a < cfg.n_train_accents + cfg.n_val_accents)
      corpus.val_accents.push_back(id);
    else
      corpus.test_accents.push_back(id);
  }

  // utterances
  const int F = cfg.feature_dim;
  for (const auto& spec : corpus.specs) {
    for (int j = 0; j < cfg.n_utterances_per_accent; ++j) {
      const auto& sentence = corpus.sentences[static_cast<std::size_t>(j)];
      std::vector<float> base;
      std::string transcript;
      Rng jit = root.split("jitter." + spec.accent_id + "." + std::to_string(j));
      for (std::size_t k = 0; k < sentence.size(); ++k) {
        const WordTemplate& w = corpus.words[static_cast<std::size_t>(sentence[k])];
        if (k) transcript += ' ';
        transcript += w.text;
        for (int t = 0; t < w.n_frames; ++t) {
          const float* fr = w.frames.data() + static_cast<std::size_t>(t) * F;
          const int copies =
              spec.token_duration_jitter > 0 &&
                      jit.uniform() < spec.token_duration_jitter
                  ? 2
                  : 1;
          for (int c = 0; c < copies; ++c) base.insert(base.end(), fr, fr + F);
        }
      }
      const std::size_t T = base.size() / F;
      std::vector<float> feat(base.size());
      for (std::size_t t = 0; t < T; ++t) {
        for (int b = 0; b < F; ++b) {
          feat[t * F + static_cast<std::size_t>(spec.bin_permutation[b])] =
              spec.bin_gains[static_cast<std::size_t>(b)] * base[t * F + b];
        }
      }
      if (spec.noise_std > 0) {
        Rng noise = root.split("noise." + spec.accent_id + "." + std::to_string(j));
        for (auto& v : feat)
          v += static_cast<float>(noise.normal() * spec.noise_std);
      }

      Utterance u;
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", spec.accent_id.c_str(), j);
      u.id = idbuf;
      u.transcript = transcript;
      u.accent_id = spec.accent_id;
      u.duration_s = static_cast<double>(T) * 0.01;
      features::FeatureSequence fs;
      fs.frames = std::move(feat);
      fs.n_frames = T;
      fs.n_bins = static_cast<std::size_t>(F);
      u.features = std::move(fs);
      corpus.utterances.push_back(std::move(u));
    }
  }
  return corpus;
}

void save_synthetic_corpus(const std::filesystem::path& dir,
                           const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir / "feats");
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest)
    throw IoError("data.synthetic: cannot write manifest under '" +
                  dir.string() + "'");
  manifest << "id\taudio_path\ttranscript\taccent\tduration_s\n";
  char dur[32];
  for (const auto& u : corpus.utterances) {
    const std::string rel = "feats/" + u.id + ".f32";
    io::write_f32_le(dir / rel, u.features->frames.data(),
                     u.features->frames.size());
    std::snprintf(dur, sizeof(dur), "%.6f", u.duration_s);
    manifest << u.id << '\t' << rel << '\t' << u.transcript << '\t'
             << u.accent_id << '\t' << dur << '\n';
  }

  json j;
  j["format_version"] = 1;
  j["feature_dim"] = corpus.config.feature_dim;
  j["seed"] = corpus.config.seed;
  j["accents"] = {{"train", corpus.train_accents},
                  {"val", corpus.val_accents},
                  {"test", corpus.test_accents}};
  j["config"] = {
      {"n_accents", corpus.config.n_accents},
      {"n_train_accents", corpus.config.n_train_accents},
      {"n_val_accents", corpus.config.n_val_accents},
      {"n_utterances_per_accent", corpus.config.n_utterances_per_accent},
      {"base_vocab_size", corpus.config.base_vocab_size},
      {"feature_dim", corpus.config.feature_dim},
      {"word_min_frames", corpus.config.word_min_frames},
      {"word_max_frames", corpus.config.word_max_frames},
      {"words_per_utterance_min", corpus.config.words_per_utterance_min},
      {"words_per_utterance_max", corpus.config.words_per_utterance_max},
      {"gain_log_range", corpus.config.gain_log_range},
      {"bin_swaps", corpus.config.bin_swaps},
      {"noise_std", corpus.config.noise_std},
      {"duration_jitter", corpus.config.duration_jitter},
      {"identity_transforms", corpus.config.identity_transforms},
      {"seed", corpus.config.seed},
  };
  j["specs"] = json::array();
  for (const auto& s : corpus.specs) {
    j["specs"].push_back({{"accent_id", s.accent_id},
                          {"bin_gains", s.bin_gains},
                          {"bin_permutation", s.bin_permutation},
                          {"noise_std", s.noise_std},
                          {"token_duration_jitter", s.token_duration_jitter}});
  }
  j["words"] = json::array();
  for (const auto& w : corpus.words)
    j["words"].push_back(
        {{"text", w.text}, {"n_frames", w.n_frames}, {"frames", w.frames}});
  j["sentences"] = corpus.sentences;

  std::ofstream meta(dir / "corpus.json");
  if (!meta)
    throw IoError("data.synthetic: cannot write corpus.json under '" +
                  dir.string() + "'");
  meta << j.dump(2) << '\n';
}

SyntheticCorpus load_synthetic_corpus(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "corpus.json");
  if (!meta)
    throw IoError("data.synthetic: cannot open '" +
                  (dir / "corpus.json").string() + "'");
  json j;
  meta >> j;

  SyntheticCorpus corpus;
  corpus.train_accents = j["accents"]["train"].get<std::vector<std::string>>();
  corpus.val_accents = j["accents"]["val"].get<std::vector<std::string>>();
  corpus.test_accents = j["accents"]["test"].get<std::vector<std::string>>();
  const json& c = j["config"];
  SynthConfig& cfg = corpus.config;
  cfg.n_accents = c["n_accents"];
  cfg.n_train_accents = c["n_train_accents"];
  cfg.n_val_accents = c["n_val_accents"];
  cfg.n_utterances_per_accent = c["n_utterances_per_accent"];
  cfg.base_vocab_size = c["base_vocab_size"];
  cfg.feature_dim = c["feature_dim"];
  cfg.word_min_frames = c["word_min_frames"];
  cfg.word_max_frames = c["word_max_frames"];
  cfg.words_per_utterance_min = c["words_per_utterance_min"];
  cfg.words_per_utterance_max = c["words_per_utterance_max"];
  cfg.gain_log_range = c["gain_log_range"];
  cfg.bin_swaps = c["bin_swaps"];
  cfg.noise_std = c["noise_std"];
  cfg.duration_jitter = c["duration_jitter"];
  cfg.identity_transforms = c["identity_transforms"];
  cfg.seed = c["seed"];

  for (const auto& js : j["specs"]) {
    SyntheticAccentSpec s;
    s.accent_id = js["accent_id"];
    s.bin_gains = js["bin_gains"].get<std::vector<float>>();
    s.bin_permutation = js["bin_permutation"].get<std::vector<int>>();
    s.noise_std = js["noise_std"];
    s.token_duration_jitter = js["token_duration_jitter"];
    corpus.specs.push_back(std::move(s));
  }
  for (const auto& jw : j["words"]) {
    WordTemplate w;
    w.text = jw["text"];
    w.n_frames = jw["n_frames"];
    w.frames = jw["frames"].get<std::vector<float>>();
    corpus.words.push_back(std::move(w));
  }
  corpus.sentences = j["sentences"].get<std::vector<std::vector<int>>>();

  ManifestOptions options;
  options.accepted_accents = corpus.all_accents();
  Manifest manifest = load_manifest(dir / "manifest.tsv", options);
  if (!manifest.rejects.empty())
    throw DataError("data.synthetic: manifest rejects in a generated corpus: " +
                    manifest.rejects.front());
  const int F = cfg.feature_dim;
  for (auto& u : manifest.utterances) {
    const auto raw = io::read_f32_le(dir / u.audio_path);
    if (raw.size() % static_cast<std::size_t>(F) != 0)
      throw DataError("data.synthetic: feature file for '" + u.id +
                      "' is not a multiple of feature_dim");
    features::FeatureSequence fs;
    fs.n_bins = static_cast<std::size_t>(F);
    fs.n_frames = raw.size() / static_cast<std::size_t>(F);
    fs.frames = raw;
    u.features = std::move(fs);
  }
  corpus.utterances = std::move(manifest.utterances);
  return corpus;
}

SplitResult split_synthetic(const SyntheticCorpus& corpus) {
  const auto preset = AccentSplitPreset::custom(
      corpus.train_accents, corpus.val_accents, corpus.test_accents);
  return make_split(preset, corpus.utterances, corpus.config.seed);
}

}  // namespace metaccent::data
