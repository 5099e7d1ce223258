#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace optlab {

inline constexpr const char* kCodeVersion = "optlab/1.0.0";

// Shortest decimal rendering that parses back to the same double, so CSV
// bytes are a pure function of the values they carry.
std::string format_double(double v);

// Table accumulating toward one CSV artifact: a `# schema=` comment line,
// a header row, then data rows.  Commas, '.' decimals, LF endings.
class CsvFile {
 public:
  CsvFile(std::string schema, std::vector<std::string> columns);

  // Cells are written verbatim; none of our column values contain commas.
  void add_row(std::vector<std::string> cells);
  void add_row(const std::vector<double>& cells);

  int rows() const { return n_rows_; }
  std::string str() const;

 private:
  std::string header_;
  std::string body_;
  std::size_t n_columns_;
  int n_rows_ = 0;
};

// Parsed CSV in the same dialect, schema line preserved.  Cells stay as
// strings; numeric(name) converts one column with empty cells mapped to NaN.
struct CsvData {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // -1 when absent
  std::vector<double> numeric(const std::string& name) const;
};

CsvData read_csv(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

struct ArtifactEntry {
  std::string path;      // relative to the manifest root
  std::string checksum;  // fnv1a of the file bytes, 16 hex digits
  std::uint64_t bytes = 0;
};

struct TimingEntry {
  std::string name;
  double seconds = 0.0;
};

struct FailureEntry {
  std::string name;
  std::string error;
};

// Ledger of everything one run emitted.  All artifact writes go through
// emit() so the file list, checksums, and sizes cannot drift from the
// directory contents.
class RunManifest {
 public:
  RunManifest(std::filesystem::path root, std::uint64_t config_hash);

  const std::filesystem::path& root() const { return root_; }
  std::uint64_t config_hash() const { return config_hash_; }

  // Writes content at root/rel_path (creating directories) and records it.
  void emit(const std::string& rel_path, const std::string& content);

  // Records an artifact already on disk, replacing any same-path entry.
  // Used to carry records forward from an earlier run into this one.
  void adopt(const ArtifactEntry& entry);

  void record_timing(const std::string& name, double seconds);
  void record_failure(const std::string& name, const std::string& error);

  bool has_artifact(const std::string& rel_path) const;

  const std::vector<ArtifactEntry>& artifacts() const { return artifacts_; }
  const std::vector<TimingEntry>& timings() const { return timings_; }
  const std::vector<FailureEntry>& failures() const { return failures_; }

  // Moves the other manifest's records onto this one; roots must agree.
  void absorb(RunManifest&& other);

  std::string to_json_string() const;

  // root/manifest.json; the manifest file itself is not listed inside.
  void write() const;
  static RunManifest load(const std::filesystem::path& root);

  // Every listed artifact exists with matching checksum; returns the paths
  // that do not.
  std::vector<std::string> validate() const;

 private:
  std::filesystem::path root_;
  std::uint64_t config_hash_ = 0;
  std::vector<ArtifactEntry> artifacts_;
  std::vector<TimingEntry> timings_;
  std::vector<FailureEntry> failures_;
};

}  // namespace optlab
