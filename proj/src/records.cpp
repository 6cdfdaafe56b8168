#include "rftl/records.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rftl::records {

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> read_rows(const fs::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw FormatError("'" + path.string() + "' does not start with the expected header");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // partial trailing line
    if (!line.empty()) rows.push_back(csv_split(line));
  }
  return rows;
}

void write_all(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad count '" + s + "'");
  return v;
}

void expect_fields(const std::vector<std::string>& f, std::size_t n) {
  if (f.size() != n) {
    throw FormatError("row has " + std::to_string(f.size()) + " fields, expected " + std::to_string(n));
  }
}

}  // namespace

const char* to_string(Method m) noexcept { return m == Method::Head ? "HEAD" : "FINETUNE"; }

Method method_from_string(const std::string& s) {
  if (s == "HEAD" || s == "head") return Method::Head;
  if (s == "FINETUNE" || s == "finetune" || s == "FINE_TUNE") return Method::FineTune;
  throw Error("unknown transfer method '" + s + "'");
}

std::string job_key(const std::string& source, const std::string& target, Method method) {
  return source + "|" + target + "|" + to_string(method);
}

std::string TransferRecord::key() const { return job_key(source, target, method); }

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& s) {
  if (s.empty()) return kMissing;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  if (quoted) throw FormatError("unterminated quote in CSV row");
  return out;
}

std::string csv_header_transfer() { return "source,target,method,accuracy,leep,logme,n,status"; }

std::string csv_row(const TransferRecord& r) {
  std::ostringstream os;
  os << csv_escape(r.source) << ',' << csv_escape(r.target) << ',' << to_string(r.method) << ','
     << format_number(r.accuracy) << ',' << format_number(r.leep) << ',' << format_number(r.logme) << ','
     << r.n_examples << ',' << csv_escape(r.status);
  return os.str();
}

TransferRecord parse_transfer_row(const std::vector<std::string>& f) {
  expect_fields(f, 8);
  TransferRecord r;
  r.source = f[0];
  r.target = f[1];
  r.method = method_from_string(f[2]);
  r.accuracy = parse_number(f[3]);
  r.leep = parse_number(f[4]);
  r.logme = parse_number(f[5]);
  r.n_examples = parse_size(f[6]);
  r.status = f[7];
  return r;
}

std::string csv_header_source() { return "source,accuracy,val_loss,epoch,status"; }

std::string csv_row(const SourceRecord& r) {
  return csv_escape(r.label) + ',' + format_number(r.accuracy) + ',' + format_number(r.val_loss) + ',' +
         std::to_string(r.epoch) + ',' + csv_escape(r.status);
}

SourceRecord parse_source_row(const std::vector<std::string>& f) {
  expect_fields(f, 5);
  SourceRecord r;
  r.label = f[0];
  r.accuracy = parse_number(f[1]);
  r.val_loss = parse_number(f[2]);
  r.epoch = static_cast<int>(parse_size(f[3]));
  r.status = f[4];
  return r;
}

void write_transfer_csv(const fs::path& path, const std::vector<TransferRecord>& rows) {
  std::vector<std::string> lines;
  for (const auto& r : rows) lines.push_back(csv_row(r));
  write_all(path, csv_header_transfer(), lines);
}

std::vector<TransferRecord> read_transfer_csv(const fs::path& path) {
  std::vector<TransferRecord> out;
  for (const auto& f : read_rows(path, csv_header_transfer())) out.push_back(parse_transfer_row(f));
  return out;
}

void write_source_csv(const fs::path& path, const std::vector<SourceRecord>& rows) {
  std::vector<std::string> lines;
  for (const auto& r : rows) lines.push_back(csv_row(r));
  write_all(path, csv_header_source(), lines);
}

std::vector<SourceRecord> read_source_csv(const fs::path& path) {
  std::vector<SourceRecord> out;
  for (const auto& f : read_rows(path, csv_header_source())) out.push_back(parse_source_row(f));
  return out;
}

AppendSink::AppendSink(fs::path path, std::string header) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  if (!fs::exists(path_) || fs::file_size(path_) == 0) {
    write_all(path_, header, {});
    return;
  }
  std::string text;
  {
    std::ifstream in(path_, std::ios::binary);
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  if (text.compare(0, header.size(), header) != 0) {
    throw FormatError("'" + path_.string() + "' has an unexpected header");
  }
  if (text.back() != '\n') {
    const auto last = text.rfind('\n');
    if (last == std::string::npos) {
      write_all(path_, header, {});
    } else {
      fs::resize_file(path_, last + 1);
    }
  }
}

void AppendSink::append(const std::string& row) {
  std::ofstream out(path_, std::ios::app);
  out << row << '\n';
  out.flush();
  if (!out) throw Error("cannot append to '" + path_.string() + "'");
}

}  // namespace rftl::records
