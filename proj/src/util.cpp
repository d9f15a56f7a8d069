#include "liverfat/util.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "liverfat/error.hpp"

namespace liverfat {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& p) {
  const auto bytes = read_bytes(p);
  return fnv1a(bytes);
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure("short write to " + p.string());
}

void write_text(const std::filesystem::path& p, std::string_view text) {
  write_bytes(p, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

unsigned default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

int CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

const std::string& CsvTable::cell(std::size_t row, std::string_view name) const {
  const int c = column(name);
  if (c < 0) throw ValidationError("missing CSV column '" + std::string(name) + "'");
  if (row >= rows.size() || static_cast<std::size_t>(c) >= rows[row].size())
    throw ValidationError("short CSV row " + std::to_string(row));
  return rows[row][static_cast<std::size_t>(c)];
}

namespace {
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}
}  // namespace

CsvTable read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw RuntimeFailure("cannot open " + p.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV " + p.string());
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    t.rows.push_back(split_line(line));
  }
  return t;
}

void write_csv(const std::filesystem::path& p, const CsvTable& t) {
  std::ostringstream os;
  auto emit = [&os](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << row[i];
    }
    os << '\n';
  };
  emit(t.header);
  for (const auto& r : t.rows) emit(r);
  write_text(p, os.str());
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::string>& files) {
  CsvTable t;
  t.header = {"file", "fnv1a64"};
  std::vector<std::string> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& f : sorted) t.rows.push_back({f, hex64(hash_file(dir / f))});
  write_csv(dir / "manifest.csv", t);
}

}  // namespace liverfat
