#include "optlab/io.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <system_error>

#include "json.hpp"
#include "optlab/errors.hpp"
#include "optlab/hash.hpp"

namespace optlab {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  return std::strtoull(s.c_str(), nullptr, 16);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvFile::CsvFile(std::string schema, std::vector<std::string> columns)
    : n_columns_(columns.size()) {
  if (columns.empty()) throw ConfigError("csv: no columns");
  header_ = "# schema=" + std::move(schema) + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) header_ += ',';
    header_ += columns[i];
  }
  header_ += '\n';
}

void CsvFile::add_row(std::vector<std::string> cells) {
  if (cells.size() != n_columns_)
    throw ConfigError("csv: row has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(n_columns_));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) body_ += ',';
    body_ += cells[i];
  }
  body_ += '\n';
  ++n_rows_;
}

void CsvFile::add_row(const std::vector<double>& cells) {
  std::vector<std::string> rendered;
  rendered.reserve(cells.size());
  for (double v : cells) rendered.push_back(format_double(v));
  add_row(std::move(rendered));
}

std::string CsvFile::str() const { return header_ + body_; }

int CsvData::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> CsvData::numeric(const std::string& name) const {
  const int c = column_index(name);
  if (c < 0) throw ConfigError("csv: no column named '" + name + "'");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    const std::string& cell = row.at(c);
    if (cell.empty()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str())
      throw ConfigError("csv: non-numeric cell '" + cell + "' in column '" +
                        name + "'");
    out.push_back(v);
  }
  return out;
}

CsvData read_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  CsvData data;
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= text.size()) return false;
    const std::size_t nl = text.find('\n', pos);
    line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    return true;
  };
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(
          start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return cells;
  };

  std::string line;
  if (!next_line(line) || line.rfind("# schema=", 0) != 0)
    throw ConfigError("csv: " + path.string() + " lacks a schema line");
  data.schema = line.substr(9);
  if (!next_line(line))
    throw ConfigError("csv: " + path.string() + " lacks a header row");
  data.columns = split(line);
  while (next_line(line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != data.columns.size())
      throw ConfigError("csv: " + path.string() + " line " +
                        std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(data.columns.size()));
    data.rows.push_back(std::move(cells));
  }
  return data;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw ConfigError("read failed on " + path.string());
  return text;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path(), ec);
  if (ec)
    throw ConfigError("cannot create directory " +
                      path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw ConfigError("write failed on " + path.string());
}

RunManifest::RunManifest(std::filesystem::path root, std::uint64_t config_hash)
    : root_(std::move(root)), config_hash_(config_hash) {}

void RunManifest::emit(const std::string& rel_path,
                       const std::string& content) {
  write_text_file(root_ / rel_path, content);
  ArtifactEntry entry{rel_path, hex64(fnv1a(content)), content.size()};
  for (auto& a : artifacts_) {
    if (a.path == rel_path) {
      a = std::move(entry);
      return;
    }
  }
  artifacts_.push_back(std::move(entry));
}

void RunManifest::adopt(const ArtifactEntry& entry) {
  for (auto& a : artifacts_) {
    if (a.path == entry.path) {
      a = entry;
      return;
    }
  }
  artifacts_.push_back(entry);
}

void RunManifest::record_timing(const std::string& name, double seconds) {
  for (auto& t : timings_) {
    if (t.name == name) {
      t.seconds = seconds;
      return;
    }
  }
  timings_.push_back({name, seconds});
}

void RunManifest::record_failure(const std::string& name,
                                 const std::string& error) {
  failures_.push_back({name, error});
}

bool RunManifest::has_artifact(const std::string& rel_path) const {
  for (const auto& a : artifacts_)
    if (a.path == rel_path) return true;
  return false;
}

void RunManifest::absorb(RunManifest&& other) {
  if (other.root_ != root_)
    throw ConfigError("cannot merge manifests with different roots: " +
                      root_.string() + " vs " + other.root_.string());
  for (auto& entry : other.artifacts_) {
    bool replaced = false;
    for (auto& a : artifacts_) {
      if (a.path == entry.path) {
        a = std::move(entry);
        replaced = true;
        break;
      }
    }
    if (!replaced) artifacts_.push_back(std::move(entry));
  }
  for (auto& t : other.timings_) record_timing(t.name, t.seconds);
  for (auto& f : other.failures_) failures_.push_back(std::move(f));
  other.artifacts_.clear();
  other.timings_.clear();
  other.failures_.clear();
}

std::string RunManifest::to_json_string() const {
  nlohmann::json j;
  j["schema"] = "optlab.manifest.v1";
  j["config_hash"] = hex64(config_hash_);
  j["code_version"] = kCodeVersion;
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : artifacts_)
    arts.push_back(
        {{"path", a.path}, {"checksum", a.checksum}, {"bytes", a.bytes}});
  j["artifacts"] = arts;
  nlohmann::json times = nlohmann::json::array();
  for (const auto& t : timings_)
    times.push_back({{"name", t.name}, {"seconds", t.seconds}});
  j["timings"] = times;
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& f : failures_)
    fails.push_back({{"name", f.name}, {"error", f.error}});
  j["failures"] = fails;
  return j.dump(2) + "\n";
}

void RunManifest::write() const {
  write_text_file(root_ / "manifest.json", to_json_string());
}

RunManifest RunManifest::load(const std::filesystem::path& root) {
  const std::string text = read_text_file(root / "manifest.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    if (j.at("schema").get<std::string>() != "optlab.manifest.v1")
      throw ConfigError("unsupported manifest schema");
    RunManifest m(root, parse_hex64(j.at("config_hash").get<std::string>()));
    for (const auto& a : j.at("artifacts"))
      m.artifacts_.push_back({a.at("path").get<std::string>(),
                              a.at("checksum").get<std::string>(),
                              a.at("bytes").get<std::uint64_t>()});
    for (const auto& t : j.at("timings"))
      m.timings_.push_back({t.at("name").get<std::string>(),
                            t.at("seconds").get<double>()});
    for (const auto& f : j.at("failures"))
      m.failures_.push_back({f.at("name").get<std::string>(),
                             f.at("error").get<std::string>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest at " + root.string() + ": " +
                      e.what());
  }
}

std::vector<std::string> RunManifest::validate() const {
  std::vector<std::string> bad;
  for (const auto& a : artifacts_) {
    const auto path = root_ / a.path;
    if (!std::filesystem::exists(path)) {
      bad.push_back(a.path);
      continue;
    }
    if (hex64(fnv1a(read_text_file(path))) != a.checksum)
      bad.push_back(a.path);
  }
  return bad;
}

}  // namespace optlab
