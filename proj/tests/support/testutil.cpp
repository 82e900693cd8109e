#include "testutil.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ecg::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "ecgtest-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path data_dir() { return ECG_TEST_DATA_DIR; }
fs::path schema_dir() { return ECG_SCHEMA_DIR; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string golden(const std::string& name) { return read_file(data_dir() / "golden" / name); }

std::string slurp_tree(const fs::path& root, const fs::path& skip) {
  std::string all;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!skip.empty() && e.path().string().rfind(skip.string(), 0) == 0) continue;
    if (e.is_regular_file()) {
      all += e.path().string();
      all += '\n';
      all += read_file(e.path());
    }
  }
  return all;
}

}  // namespace ecg::testing
