#pragma once

// Dataset download with content-hash verification. Kept out of the library
// so the core stays offline and dependency-free.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ceqn::fetch {

namespace fs = std::filesystem;

struct DatasetSource {
  std::string host;  // scheme://host
  std::string path;
  std::string file_name;
};

inline const std::map<std::string, DatasetSource>& registry() {
  static const std::map<std::string, DatasetSource> r = {
      {"a9a", {"https://www.csie.ntu.edu.tw", "/~cjlin/libsvmtools/datasets/binary/a9a", "a9a"}},
      {"a9a.t", {"https://www.csie.ntu.edu.tw", "/~cjlin/libsvmtools/datasets/binary/a9a.t", "a9a.t"}},
      // bzip2-compressed upstream; decompress before use
      {"real-sim", {"https://www.csie.ntu.edu.tw", "/~cjlin/libsvmtools/datasets/binary/real-sim.bz2", "real-sim.bz2"}},
  };
  return r;
}

inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("sha256: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha256: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Compares `content` against, in order: an explicit expected hash, then the
/// hash recorded next to the file (`<file>.sha256`). With neither present the
/// hash is recorded. Returns the content hash; throws on mismatch.
inline std::string verify_or_record(const std::string& content, const fs::path& file,
                                    const std::optional<std::string>& expected) {
  const std::string got = sha256_hex(content);
  const fs::path record = file.string() + ".sha256";
  std::optional<std::string> want = expected;
  if (!want && fs::exists(record)) {
    std::string line = read_file(record);
    want = line.substr(0, line.find_first_of(" \n\r\t"));
  }
  if (want && *want != got) {
    throw std::runtime_error("content hash mismatch for " + file.string() + ": expected " + *want + ", got " + got);
  }
  if (!fs::exists(record)) {
    std::ofstream out(record);
    out << got << "  " << file.filename().string() << '\n';
  }
  return got;
}

/// Downloads a registered dataset into `out_dir`. Returns the stored file path.
inline fs::path fetch_dataset(const std::string& name, const fs::path& out_dir,
                              const std::optional<std::string>& expected_sha256) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw std::invalid_argument("unknown dataset '" + name + "'");
  const auto& src = it->second;
  httplib::Client client(src.host);
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  auto res = client.Get(src.path);
  if (!res) throw std::runtime_error("download failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw std::runtime_error("download failed: HTTP " + std::to_string(res->status));
  fs::create_directories(out_dir);
  const fs::path file = out_dir / src.file_name;
  verify_or_record(res->body, file, expected_sha256);
  std::ofstream out(file, std::ios::binary);
  out << res->body;
  if (!out) throw std::runtime_error("cannot write " + file.string());
  return file;
}

}  // namespace ceqn::fetch
