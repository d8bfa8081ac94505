#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "plbench/error.hpp"

namespace plbench::cli {

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw DataError("sha256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

Run::Run(std::string command, std::filesystem::path out_dir, std::uint64_t seed)
    : command_(std::move(command)), out_dir_(std::move(out_dir)), seed_(seed) {}

std::filesystem::path Run::resolve(const std::filesystem::path& name) const {
  return name.is_absolute() ? name : out_dir_ / name;
}

void Run::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.string(), sha256_file(path));
}

void Run::add_seed(const std::string& name, std::uint64_t value) { seeds_.emplace_back(name, value); }

void Run::add_output(const std::filesystem::path& name, std::string contents) {
  outputs_.emplace_back(resolve(name), std::move(contents));
}

std::vector<std::filesystem::path> Run::commit() {
  std::error_code ec;
  std::filesystem::create_directories(out_dir_, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir_.string() + "': " + ec.message());

  Json m;
  m["tool"] = "plbench";
  m["command"] = command_;
  m["seed"] = seed_;
  m["derived_seeds"] = Json::object();
  for (const auto& [name, value] : seeds_) m["derived_seeds"][name] = value;
  m["inputs"] = Json::array();
  for (const auto& [path, hash] : inputs_) m["inputs"].push_back({{"path", path}, {"sha256", hash}});
  m["config"] = config_;
  m["outputs"] = Json::array();

  std::vector<std::filesystem::path> written;
  for (const auto& [path, contents] : outputs_) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    write_file_atomic(path, contents);
    m["outputs"].push_back({{"path", path.string()}, {"sha256", sha256_hex(contents)}});
    written.push_back(path);
  }
  const auto manifest = out_dir_ / ("manifest-" + command_ + ".json");
  write_file_atomic(manifest, m.dump(2) + "\n");
  written.push_back(manifest);
  return written;
}

}  // namespace plbench::cli
