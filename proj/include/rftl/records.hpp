#pragma once

// Transfer and source record tables, persisted as UTF-8 CSV with a header row.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "rftl/common.hpp"

namespace rftl::records {

enum class Method { Head, FineTune };

const char* to_string(Method m) noexcept;
Method method_from_string(const std::string& s);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// One (source, target, method) outcome. Scores describe the source model on
/// the target training split and do not depend on the method.
struct TransferRecord {
  std::string source;
  std::string target;
  Method method = Method::Head;
  double accuracy = kMissing;
  double leep = kMissing;
  double logme = kMissing;
  std::size_t n_examples = 0;
  std::string status = "ok";

  bool ok() const noexcept { return status == "ok"; }
  std::string key() const;
};

/// A pretrained source model evaluated on its own test split.
struct SourceRecord {
  std::string label;
  double accuracy = kMissing;
  double val_loss = kMissing;
  int epoch = 0;
  std::string status = "ok";

  bool ok() const noexcept { return status == "ok"; }
};

std::string job_key(const std::string& source, const std::string& target, Method method);

/// Shortest round-trip text for a double; NaN becomes an empty field.
std::string format_number(double v);
double parse_number(const std::string& s);

// Minimal RFC 4180 helpers.
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split(const std::string& line);

std::string csv_header_transfer();
std::string csv_row(const TransferRecord& r);
TransferRecord parse_transfer_row(const std::vector<std::string>& fields);

std::string csv_header_source();
std::string csv_row(const SourceRecord& r);
SourceRecord parse_source_row(const std::vector<std::string>& fields);

void write_transfer_csv(const std::filesystem::path& path, const std::vector<TransferRecord>& rows);
std::vector<TransferRecord> read_transfer_csv(const std::filesystem::path& path);

void write_source_csv(const std::filesystem::path& path, const std::vector<SourceRecord>& rows);
std::vector<SourceRecord> read_source_csv(const std::filesystem::path& path);

/// Append-only CSV sink. Opening an existing file drops a trailing partial
/// line (left by an interrupted writer) and keeps complete rows.
class AppendSink {
 public:
  AppendSink(std::filesystem::path path, std::string header);

  void append(const std::string& row);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace rftl::records
