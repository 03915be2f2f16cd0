#include "metaccent/data/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "metaccent/error.hpp"

namespace metaccent::data {

namespace {

constexpr const char* kHeader = "id\taudio_path\ttranscript\taccent\tduration_s";

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Accepts the two-letter code, the table's full accent name, and the label
// CommonVoice uses internally. Returns empty when unknown.
std::string to_accent_code(const std::string& raw) {
  static const std::map<std::string, std::string> lookup = [] {
    std::map<std::string, std::string> m;
    for (const auto& [code, name] : commonvoice_accents()) {
      m[code] = code;
      m[lower(name)] = code;
    }
    // CommonVoice-internal labels
    m["african"] = "af";
    m["australia"] = "au";
    m["bermuda"] = "be";
    m["canada"] = "ca";
    m["england"] = "en";
    m["hongkong"] = "hk";
    m["indian"] = "in";
    m["ireland"] = "ir";
    m["malaysia"] = "my";
    m["newzealand"] = "nz";
    m["philippines"] = "ph";
    m["scotland"] = "sc";
    m["singapore"] = "sg";
    m["southatlandic"] = "sa";
    m["southatlantic"] = "sa";
    m["us"] = "us";
    m["wales"] = "wa";
    return m;
  }();
  auto it = lookup.find(lower(trim(raw)));
  return it == lookup.end() ? std::string() : it->second;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

const std::map<std::string, std::string>& commonvoice_accents() {
  static const std::map<std::string, std::string> accents{
      {"af", "Africa"},        {"au", "Australia"},
      {"be", "Bermuda"},       {"ca", "Canada"},
      {"en", "England"},       {"hk", "Hong Kong"},
      {"in", "India"},         {"ir", "Ireland"},
      {"my", "Malaysia"},      {"nz", "New Zealand"},
      {"ph", "Philippines"},   {"sc", "Scotland"},
      {"sg", "Singapore"},     {"sa", "South Atlantic"},
      {"us", "United States"}, {"wa", "Wales"},
  };
  return accents;
}

std::string normalize_text(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  auto push = [&out](char c) {
    if (c == ' ') {
      if (out.empty() || out.back() == ' ') return;
    }
    out.push_back(c);
  };

  const std::size_t n = raw.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char b = static_cast<unsigned char>(raw[i]);
    std::uint32_t cp = 0;
    std::size_t len = 1;
    if (b < 0x80) {
      cp = b;
    } else if ((b >> 5) == 0x6 && i + 1 < n) {
      cp = (static_cast<std::uint32_t>(b & 0x1f) << 6) |
           (static_cast<unsigned char>(raw[i + 1]) & 0x3f);
      len = 2;
    } else if ((b >> 4) == 0xe && i + 2 < n) {
      cp = (static_cast<std::uint32_t>(b & 0x0f) << 12) |
           ((static_cast<unsigned char>(raw[i + 1]) & 0x3f) << 6) |
           (static_cast<unsigned char>(raw[i + 2]) & 0x3f);
      len = 3;
    } else if ((b >> 3) == 0x1e && i + 3 < n) {
      len = 4;  // outside the mapped range; dropped
    }
    i += len;

    if (cp >= 'A' && cp <= 'Z') {
      push(static_cast<char>(cp - 'A' + 'a'));
    } else if (cp >= 'a' && cp <= 'z') {
      push(static_cast<char>(cp));
    } else if (cp == '\'' || cp == 0x2019 || cp == 0x02bc) {
      push('\'');
    } else if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' ||
               cp == '\f' || cp == '\v' || cp == 0xa0 || cp == 0x2028 ||
               cp == 0x2029) {
      push(' ');
    }
    // everything else is punctuation/symbols/digits: dropped
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

Manifest load_manifest(const std::filesystem::path& path,
                       const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in)
    throw IoError("data.load_manifest: cannot open '" + path.string() + "'");

  std::vector<std::string> accepted = options.accepted_accents;
  if (accepted.empty() && !options.allow_any_accent)
    for (const auto& [code, name] : commonvoice_accents()) accepted.push_back(code);

  auto accent_accepted = [&](const std::string& code) {
    if (options.allow_any_accent) return !code.empty();
    return std::find(accepted.begin(), accepted.end(), code) != accepted.end();
  };

  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (!saw_header) {
      if (line.empty()) continue;  // an empty file is an empty dataset
      if (line != kHeader)
        throw DataError("data.load_manifest: line 1: expected header '" +
                        std::string(kHeader) + "', got '" + line + "'");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 5)
      throw DataError("data.load_manifest: line " + std::to_string(line_no) +
                      ": expected 5 tab-separated fields, got " +
                      std::to_string(fields.size()));
    Utterance u;
    u.id = trim(fields[0]);
    u.audio_path = trim(fields[1]);
    if (u.id.empty())
      throw DataError("data.load_manifest: line " + std::to_string(line_no) +
                      ": empty id");
    char* end = nullptr;
    const std::string dur_str = trim(fields[4]);
    u.duration_s = std::strtod(dur_str.c_str(), &end);
    if (dur_str.empty() || end != dur_str.c_str() + dur_str.size() ||
        !std::isfinite(u.duration_s) || u.duration_s < 0)
      throw DataError("data.load_manifest: line " + std::to_string(line_no) +
                      ": bad duration_s '" + fields[4] + "'");

    std::string code = to_accent_code(fields[3]);
    if (code.empty() && options.allow_any_accent) code = lower(trim(fields[3]));
    if (code.empty() && !options.accepted_accents.empty()) {
      // custom accent sets accept their labels verbatim
      const std::string raw = lower(trim(fields[3]));
      if (std::find(accepted.begin(), accepted.end(), raw) != accepted.end())
        code = raw;
    }
    if (!accent_accepted(code)) {
      m.rejects.push_back("line " + std::to_string(line_no) +
                          ": unknown accent label '" + trim(fields[3]) +
                          "' (id " + u.id + ")");
      continue;
    }
    u.accent_id = code;

    u.transcript = normalize_text(fields[2]);
    if (u.transcript.empty()) {
      m.rejects.push_back("line " + std::to_string(line_no) +
                          ": empty transcript after normalization (id " +
                          u.id + ")");
      continue;
    }

    auto& st = m.stats[u.accent_id];
    st.count += 1;
    st.hours += u.duration_s / 3600.0;
    m.utterances.push_back(std::move(u));
  }
  return m;
}

std::string format_stats_table(const Manifest& manifest) {
  const auto& names = commonvoice_accents();
  std::vector<std::pair<std::string, std::string>> rows;  // display, code
  for (const auto& [code, st] : manifest.stats) {
    auto it = names.find(code);
    const std::string display =
        it == names.end() ? code : it->second + " (" + code + ")";
    rows.emplace_back(display, code);
  }
  std::sort(rows.begin(), rows.end());

  char line[128];
  std::string out;
  std::snprintf(line, sizeof(line), "%-24s %10s %12s\n", "accent", "samples",
                "hours");
  out += line;
  std::size_t total_count = 0;
  double total_hours = 0;
  for (const auto& [display, code] : rows) {
    const auto& st = manifest.stats.at(code);
    std::snprintf(line, sizeof(line), "%-24s %10zu %12.2f\n", display.c_str(),
                  st.count, st.hours);
    out += line;
    total_count += st.count;
    total_hours += st.hours;
  }
  std::snprintf(line, sizeof(line), "%-24s %10zu %12.2f\n", "Total",
                total_count, total_hours);
  out += line;
  return out;
}

model::GraphemeVocab build_vocab(const std::vector<Utterance>& utterances) {
  if (utterances.empty())
    throw DataError("data.build_vocab: empty corpus");
  std::vector<char> chars;
  for (const auto& u : utterances)
    for (char c : u.transcript) chars.push_back(c);
  return model::GraphemeVocab::from_characters(chars);
}

std::size_t convert_commonvoice_tsv(const std::filesystem::path& validated_tsv,
                                    const std::filesystem::path& clips_dir,
                                    const std::filesystem::path& out_manifest) {
  std::ifstream in(validated_tsv);
  if (!in)
    throw IoError("data.convert_commonvoice: cannot open '" +
                  validated_tsv.string() + "'");
  std::ofstream out(out_manifest);
  if (!out)
    throw IoError("data.convert_commonvoice: cannot write '" +
                  out_manifest.string() + "'");

  std::string line;
  if (!std::getline(in, line))
    throw DataError("data.convert_commonvoice: empty input");
  const auto header = split_tabs(strip_cr(line));
  auto col = [&](const std::string& name) -> long {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<long>(i);
    return -1;
  };
  const long path_col = col("path"), sent_col = col("sentence"),
             accent_col = col("accent"), dur_col = col("duration");
  if (path_col < 0 || sent_col < 0 || accent_col < 0)
    throw DataError(
        "data.convert_commonvoice: need path/sentence/accent columns");

  out << kHeader << "\n";
  std::size_t written = 0;
  while (std::getline(in, line)) {
    const auto f = split_tabs(strip_cr(line));
    if (f.size() <= static_cast<std::size_t>(std::max(
                        {path_col, sent_col, accent_col})))
      continue;
    const std::string code = to_accent_code(f[static_cast<std::size_t>(accent_col)]);
    if (code.empty()) continue;
    std::string sentence = f[static_cast<std::size_t>(sent_col)];
    std::replace(sentence.begin(), sentence.end(), '\t', ' ');
    const std::string& clip = f[static_cast<std::size_t>(path_col)];
    std::string id = std::filesystem::path(clip).stem().string();
    double dur = 0;
    if (dur_col >= 0 && f.size() > static_cast<std::size_t>(dur_col))
      dur = std::atof(f[static_cast<std::size_t>(dur_col)].c_str());
    out << id << '\t' << (clips_dir / clip).string() << '\t' << sentence
        << '\t' << code << '\t' << dur << '\n';
    ++written;
  }
  return written;
}

}  // namespace metaccent::data
