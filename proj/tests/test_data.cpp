#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "metaccent/data/manifest.hpp"
#include "metaccent/data/split.hpp"
#include "metaccent/data/synthetic.hpp"
#include "metaccent/error.hpp"
#include "metaccent/rng.hpp"

using namespace metaccent;
using namespace metaccent::data;

#ifndef METACCENT_FIXTURE_DIR
#define METACCENT_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

std::filesystem::path write_temp(const std::string& name,
                                 const std::string& body) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream out(p);
  out << body;
  return p;
}

}  // namespace

TEST_CASE("normalize_text hand cases") {
  CHECK(normalize_text("Hello, World!") == "hello world");
  CHECK(normalize_text("don't  STOP") == "don't stop");
  CHECK(normalize_text("") == "");
  CHECK(normalize_text("!!!") == "");
  CHECK(normalize_text("  double  spaces ") == "double spaces");
  CHECK(normalize_text("Tab\tand\nnewline") == "tab and newline");
  CHECK(normalize_text("curly \xE2\x80\x99quote\xE2\x80\x99") ==
        "curly 'quote'");
  CHECK(normalize_text("digits 123 go") == "digits go");
}

TEST_CASE("normalize_text is idempotent with image {a..z, ', space}") {
  Rng rng(31337);
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    const std::size_t len = rng.below(60);
    for (std::size_t i = 0; i < len; ++i)
      s += static_cast<char>(rng.below(0x60) + 0x20);
    const std::string once = normalize_text(s);
    CHECK(normalize_text(once) == once);
    for (char c : once) {
      const bool ok = (c >= 'a' && c <= 'z') || c == '\'' || c == ' ';
      CHECK(ok);
    }
  }
}

TEST_CASE("load_manifest: 3-row toy manifest matches hand sums") {
  auto p = write_temp("metaccent_toy_manifest.tsv",
                      "id\taudio_path\ttranscript\taccent\tduration_s\n"
                      "a\tx.wav\tHello there\tbe\t1.5\n"
                      "b\ty.wav\tSecond row!\tbe\t2.5\n"
                      "c\tz.wav\tother accent\tus\t3.0\n");
  auto m = load_manifest(p);
  CHECK(m.utterances.size() == 3);
  CHECK(m.stats.at("be").count == 2);
  CHECK(m.stats.at("be").hours == doctest::Approx(4.0 / 3600.0));
  CHECK(m.stats.at("us").count == 1);
  CHECK(m.utterances[0].transcript == "hello there");
}

TEST_CASE("load_manifest: empty file gives an empty dataset") {
  auto p = write_temp("metaccent_empty_manifest.tsv", "");
  auto m = load_manifest(p);
  CHECK(m.utterances.empty());
  CHECK(m.stats.empty());
}

TEST_CASE("load_manifest: malformed rows are fatal with the line number") {
  auto p = write_temp("metaccent_bad_manifest.tsv",
                      "id\taudio_path\ttranscript\taccent\tduration_s\n"
                      "a\tx.wav\tok row\tbe\t1.0\n"
                      "b\ty.wav\tmissing fields\n");
  CHECK_THROWS_WITH_AS(load_manifest(p), doctest::Contains("line 3"),
                       DataError);

  auto q = write_temp("metaccent_bad_duration.tsv",
                      "id\taudio_path\ttranscript\taccent\tduration_s\n"
                      "a\tx.wav\tok row\tbe\tNOPE\n");
  CHECK_THROWS_WITH_AS(load_manifest(q), doctest::Contains("line 2"),
                       DataError);
}

TEST_CASE("load_manifest: unknown accents are rejected, not fatal") {
  auto p = write_temp("metaccent_rejects.tsv",
                      "id\taudio_path\ttranscript\taccent\tduration_s\n"
                      "a\tx.wav\tkeep me\tbe\t1.0\n"
                      "b\ty.wav\tdrop me\tklingon\t1.0\n"
                      "c\tz.wav\t!!!\tbe\t1.0\n");
  auto m = load_manifest(p);
  CHECK(m.utterances.size() == 1);
  REQUIRE(m.rejects.size() == 2);
  CHECK(m.rejects[0].find("klingon") != std::string::npos);
  CHECK(m.rejects[1].find("empty transcript") != std::string::npos);
}

TEST_CASE("mini fixture: stats match hand-computed values") {
  auto m = load_manifest(std::filesystem::path(METACCENT_FIXTURE_DIR) /
                         "mini_manifest.tsv");
  CHECK(m.utterances.size() == 20);
  CHECK(m.rejects.empty());
  CHECK(m.stats.at("af").count == 3);
  CHECK(m.stats.at("af").hours == doctest::Approx(6.5 / 3600.0).epsilon(1e-12));
  CHECK(m.stats.at("be").count == 2);
  CHECK(m.stats.at("be").hours == doctest::Approx(4.5 / 3600.0).epsilon(1e-12));
  CHECK(m.stats.at("us").count == 5);
  CHECK(m.stats.at("us").hours == doctest::Approx(150.0 / 3600.0).epsilon(1e-12));
  CHECK(m.stats.at("wa").count == 4);
  CHECK(m.stats.at("ph").count == 6);
  const std::string table = format_stats_table(m);
  CHECK(table.find("Africa (af)") != std::string::npos);
  CHECK(table.find("Total") != std::string::npos);
  CHECK(table.find("20") != std::string::npos);
}

TEST_CASE("build_vocab: reserved slots plus sorted unique characters") {
  std::vector<Utterance> utts(2);
  utts[0].transcript = "cab";
  utts[1].transcript = "ba d";
  auto v = build_vocab(utts);
  const auto& sym = v.symbols();
  REQUIRE(sym.size() == 9);
  CHECK(sym[0] == "<pad>");
  CHECK(sym[1] == "<sos>");
  CHECK(sym[2] == "<eos>");
  CHECK(sym[3] == "<unk>");
  CHECK(sym[4] == " ");
  CHECK(sym[5] == "a");
  CHECK(sym[8] == "d");
  CHECK(v.tokenize("bad")[0] == 6);
  CHECK(v.detokenize(v.tokenize("ba d")) == "ba d");
  CHECK(v.index_of('z') == model::GraphemeVocab::kUnk);
  CHECK_THROWS_AS(build_vocab({}), DataError);
}

namespace {

std::vector<Utterance> fake_corpus(const std::vector<std::pair<std::string, int>>& spec) {
  std::vector<Utterance> utts;
  for (const auto& [accent, n] : spec) {
    for (int i = 0; i < n; ++i) {
      Utterance u;
      u.id = accent + "_" + std::to_string(i);
      u.accent_id = accent;
      u.transcript = "x";
      u.duration_s = 1;
      utts.push_back(u);
    }
  }
  return utts;
}

}  // namespace

TEST_CASE("make_split: 75/25 arithmetic, determinism, disjoint coverage") {
  auto utts = fake_corpus({{"aa", 20}, {"bb", 30}, {"cc", 400}});
  auto preset = AccentSplitPreset::custom({"aa"}, {"bb"}, {"cc"});
  auto s1 = make_split(preset, utts, 99);
  auto s2 = make_split(preset, utts, 99);

  CHECK(s1.adapt.at("cc").adapt_train.size() == 300);
  CHECK(s1.adapt.at("cc").adapt_test.size() == 100);

  auto ids = [](const std::vector<Utterance>& v) {
    std::set<std::string> out;
    for (const auto& u : v) out.insert(u.id);
    return out;
  };
  CHECK(ids(s1.adapt.at("cc").adapt_train) == ids(s2.adapt.at("cc").adapt_train));

  auto tr = ids(s1.adapt.at("cc").adapt_train);
  auto te = ids(s1.adapt.at("cc").adapt_test);
  std::set<std::string> inter;
  for (const auto& x : tr)
    if (te.count(x)) inter.insert(x);
  CHECK(inter.empty());
  CHECK(tr.size() + te.size() == 400);

  auto s3 = make_split(preset, utts, 100);
  CHECK(ids(s3.adapt.at("cc").adapt_train) != ids(s1.adapt.at("cc").adapt_train));
}

TEST_CASE("make_split: missing accent names the preset and accent") {
  auto utts = fake_corpus({{"aa", 4}});
  auto preset = AccentSplitPreset::custom({"aa"}, {"aa"}, {"zz"});
  CHECK_THROWS_WITH_AS(make_split(preset, utts, 1), doctest::Contains("zz"),
                       ConfigError);
}

TEST_CASE("preset invariants: val/test and train/test disjoint") {
  CHECK_THROWS_AS(AccentSplitPreset::custom({"a"}, {"b"}, {"b"}), ConfigError);
  CHECK_THROWS_AS(AccentSplitPreset::custom({"a"}, {"c"}, {"a"}), ConfigError);
  CHECK_NOTHROW(AccentSplitPreset::mixed_region().validate());
  CHECK_NOTHROW(AccentSplitPreset::cross_region().validate());
  const auto mixed = AccentSplitPreset::mixed_region();
  CHECK(mixed.train_accents.size() == 10);
  const auto cross = AccentSplitPreset::cross_region();
  CHECK(cross.train_accents.size() == 5);
  CHECK(cross.test_accents.size() == 5);
}

TEST_CASE("synthetic corpus: fixed seed is bitwise reproducible") {
  SynthConfig cfg;
  cfg.n_accents = 4;
  cfg.n_train_accents = 2;
  cfg.n_val_accents = 1;
  cfg.n_utterances_per_accent = 6;
  auto a = generate_synthetic_corpus(cfg);
  auto b = generate_synthetic_corpus(cfg);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    CHECK(a.utterances[i].id == b.utterances[i].id);
    CHECK(a.utterances[i].transcript == b.utterances[i].transcript);
    CHECK(a.utterances[i].features->frames == b.utterances[i].features->frames);
  }
}

TEST_CASE("synthetic corpus: identity transforms and zero noise match accents") {
  SynthConfig cfg;
  cfg.n_accents = 3;
  cfg.n_train_accents = 1;
  cfg.n_val_accents = 1;
  cfg.n_utterances_per_accent = 5;
  cfg.noise_std = 0;
  cfg.duration_jitter = 0;
  cfg.identity_transforms = true;
  auto c = generate_synthetic_corpus(cfg);
  // same sentence index j across accents -> identical transcript and features
  for (int j = 0; j < cfg.n_utterances_per_accent; ++j) {
    const auto& u0 = c.utterances[static_cast<std::size_t>(j)];
    const auto& u1 =
        c.utterances[static_cast<std::size_t>(cfg.n_utterances_per_accent + j)];
    CHECK(u0.transcript == u1.transcript);
    CHECK(u0.features->frames == u1.features->frames);
  }
}

TEST_CASE("synthetic corpus: distinct channels separate accent means") {
  SynthConfig cfg;
  cfg.n_accents = 3;
  cfg.n_train_accents = 1;
  cfg.n_val_accents = 1;
  cfg.n_utterances_per_accent = 10;
  cfg.noise_std = 0;
  auto c = generate_synthetic_corpus(cfg);
  const int F = cfg.feature_dim;
  std::vector<std::vector<double>> means;
  for (const auto& accent : c.all_accents()) {
    std::vector<double> mean(F, 0.0);
    std::size_t frames = 0;
    for (const auto& u : c.utterances) {
      if (u.accent_id != accent) continue;
      for (std::size_t t = 0; t < u.features->n_frames; ++t)
        for (int b = 0; b < F; ++b) mean[b] += std::abs(u.features->frame(t)[b]);
      frames += u.features->n_frames;
    }
    for (auto& v : mean) v /= static_cast<double>(frames);
    means.push_back(std::move(mean));
  }
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      double l2 = 0;
      for (int b = 0; b < F; ++b)
        l2 += (means[i][b] - means[j][b]) * (means[i][b] - means[j][b]);
      CHECK(std::sqrt(l2) > 1e-3);
    }
}

TEST_CASE("synthetic corpus: nearest-template recovery is exact at zero noise") {
  SynthConfig cfg;
  cfg.n_accents = 4;
  cfg.n_train_accents = 2;
  cfg.n_val_accents = 1;
  cfg.n_utterances_per_accent = 8;
  cfg.noise_std = 0;
  cfg.duration_jitter = 0;
  auto c = generate_synthetic_corpus(cfg);
  const int F = cfg.feature_dim;

  for (const auto& u : c.utterances) {
    const auto& spec = c.spec_of(u.accent_id);
    // transform every template through this accent's channel
    std::vector<std::vector<float>> channelized;
    for (const auto& w : c.words) {
      std::vector<float> f(w.frames.size());
      for (int t = 0; t < w.n_frames; ++t)
        for (int b = 0; b < F; ++b)
          f[static_cast<std::size_t>(t) * F +
            static_cast<std::size_t>(spec.bin_permutation[b])] =
              spec.bin_gains[static_cast<std::size_t>(b)] *
              w.frames[static_cast<std::size_t>(t) * F + b];
      channelized.push_back(std::move(f));
    }
    // walk the utterance, classifying each segment by nearest template
    const std::size_t utt_index = std::stoul(u.id.substr(u.id.rfind('_') + 1));
    const auto& sentence = c.sentences[utt_index];
    std::size_t frame = 0;
    for (int word_id : sentence) {
      const int lenf = c.words[static_cast<std::size_t>(word_id)].n_frames;
      int best = -1;
      double best_d = 1e300;
      for (std::size_t w = 0; w < c.words.size(); ++w) {
        if (c.words[w].n_frames != lenf) continue;
        double d = 0;
        for (int t = 0; t < lenf; ++t)
          for (int b = 0; b < F; ++b) {
            const double diff =
                u.features->frame(frame + static_cast<std::size_t>(t))[b] -
                channelized[w][static_cast<std::size_t>(t) * F + b];
            d += diff * diff;
          }
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(w);
        }
      }
      CHECK(best == word_id);
      frame += static_cast<std::size_t>(lenf);
    }
    CHECK(frame == u.features->n_frames);
  }
}

TEST_CASE("synthetic corpus: save/load round trip and split wiring") {
  SynthConfig cfg;
  cfg.n_accents = 4;
  cfg.n_train_accents = 2;
  cfg.n_val_accents = 1;
  cfg.n_utterances_per_accent = 6;
  auto c = generate_synthetic_corpus(cfg);
  auto dir = std::filesystem::temp_directory_path() / "metaccent_synth_rt";
  std::filesystem::remove_all(dir);
  save_synthetic_corpus(dir, c);
  auto loaded = load_synthetic_corpus(dir);

  REQUIRE(loaded.utterances.size() == c.utterances.size());
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    CHECK(loaded.utterances[i].id == c.utterances[i].id);
    CHECK(loaded.utterances[i].transcript == c.utterances[i].transcript);
    CHECK(loaded.utterances[i].features->frames ==
          c.utterances[i].features->frames);  // bitwise through f32 files
  }
  CHECK(loaded.train_accents == c.train_accents);
  CHECK(loaded.words.size() == c.words.size());

  auto split = split_synthetic(loaded);
  CHECK(split.train.size() == 2);
  CHECK(split.val.size() == 1);
  CHECK(split.test.size() == 1);
  CHECK(split.adapt.size() == 1);
  const auto& adapt = split.adapt.begin()->second;
  CHECK(adapt.adapt_train.size() == 4);  // floor(0.75 * 6)
  CHECK(adapt.adapt_test.size() == 2);
}
