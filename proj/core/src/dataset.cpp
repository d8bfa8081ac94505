#include "plbench/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "plbench/error.hpp"
#include "plbench/random.hpp"

namespace plbench {

double quantize(double value) {
  if (!std::isfinite(value)) return value;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return std::strtod(buf, nullptr);
}

void quantize_in_place(std::span<double> values) {
  for (auto& v : values) v = quantize(v);
}

std::string make_triple_id(std::span<const double> x, std::span<const double> y1,
                           std::span<const double> y2) {
  // FNV-1a over the bit patterns of the (already quantized) values.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::span<const double> values) {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(quantize(v));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  mix(x);
  mix(y1);
  mix(y2);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "t%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ComparisonRecord make_record(std::string user_id, Embedding x, Embedding y1, Embedding y2,
                             int label) {
  quantize_in_place(x);
  quantize_in_place(y1);
  quantize_in_place(y2);
  ComparisonRecord r;
  r.triple_id = make_triple_id(x, y1, y2);
  r.user_id = std::move(user_id);
  r.x = std::move(x);
  r.y1 = std::move(y1);
  r.y2 = std::move(y2);
  r.label = label;
  return r;
}

namespace {

std::string check_record(const ComparisonRecord& r, std::size_t dimension) {
  auto check_vec = [&](const Embedding& v, const char* name) -> std::string {
    if (v.size() != dimension) {
      return std::string(name) + " has dimension " + std::to_string(v.size()) +
             ", expected " + std::to_string(dimension);
    }
    for (double value : v) {
      if (!std::isfinite(value)) return std::string(name) + " has a non-finite entry";
    }
    return {};
  };
  if (auto e = check_vec(r.x, "x"); !e.empty()) return e;
  if (auto e = check_vec(r.y1, "y1"); !e.empty()) return e;
  if (auto e = check_vec(r.y2, "y2"); !e.empty()) return e;
  if (r.label != 0 && r.label != 1) return "label must be 0 or 1";
  if (r.user_id.empty()) return "empty user_id";
  if (r.triple_id.empty()) return "empty triple_id";
  return {};
}

}  // namespace

PreferenceDataset::PreferenceDataset(std::size_t dimension, std::vector<ComparisonRecord> records,
                                     DatasetMetadata metadata)
    : dimension_(dimension), records_(std::move(records)), metadata_(std::move(metadata)) {
  if (dimension_ == 0) throw DataError("dataset dimension must be positive");
  std::set<std::string> users;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (auto e = check_record(records_[i], dimension_); !e.empty()) {
      throw DataError("record " + std::to_string(i) + ": " + e);
    }
    users.insert(records_[i].user_id);
  }
  users_.assign(users.begin(), users.end());
}

PreferenceDataset PreferenceDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<ComparisonRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records_.at(i));
  return PreferenceDataset(dimension_, std::move(out), metadata_);
}

std::vector<std::size_t> PreferenceDataset::indices_for_user(const std::string& user_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].user_id == user_id) out.push_back(i);
  }
  return out;
}

PreferenceDataset PreferenceDataset::for_user(const std::string& user_id) const {
  auto idx = indices_for_user(user_id);
  return subset(idx);
}

Json record_to_json(const ComparisonRecord& record) {
  Json j;
  j["triple_id"] = record.triple_id;
  j["user_id"] = record.user_id;
  j["x"] = record.x;
  j["y1"] = record.y1;
  j["y2"] = record.y2;
  j["label"] = record.label;
  return j;
}

ComparisonRecord record_from_json(const Json& line, std::size_t dimension) {
  if (!line.is_object()) throw DataError("record is not an object");
  ComparisonRecord r;
  try {
    r.triple_id = line.at("triple_id").get<std::string>();
    r.user_id = line.at("user_id").get<std::string>();
    r.x = line.at("x").get<std::vector<double>>();
    r.y1 = line.at("y1").get<std::vector<double>>();
    r.y2 = line.at("y2").get<std::vector<double>>();
    r.label = line.at("label").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  }
  quantize_in_place(r.x);
  quantize_in_place(r.y1);
  quantize_in_place(r.y2);
  if (auto e = check_record(r, dimension); !e.empty()) throw DataError(e);
  return r;
}

namespace {

Json metadata_to_json(const PreferenceDataset& dataset) {
  Json j;
  j["format_version"] = kDatasetFormatVersion;
  j["dimension"] = dataset.dimension();
  j["generator"] = dataset.metadata().generator;
  j["seed"] = dataset.metadata().seed;
  return j;
}

}  // namespace

std::string dataset_to_string(const PreferenceDataset& dataset) {
  std::string out = metadata_to_json(dataset).dump();
  out.push_back('\n');
  for (const auto& r : dataset.records()) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

void save_dataset(const PreferenceDataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_string(dataset));
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::size_t dimension = 0;
  DatasetMetadata metadata;
  bool have_header = false;
  std::vector<ComparisonRecord> records;
  std::unordered_map<std::string, std::size_t> first_of_triple;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON");
    }
    if (!have_header) {
      try {
        int version = j.at("format_version").get<int>();
        if (version != kDatasetFormatVersion) {
          throw DataError("line " + std::to_string(line_no) + ": unsupported format_version " +
                          std::to_string(version));
        }
        dimension = j.at("dimension").get<std::size_t>();
        if (j.contains("generator")) metadata.generator = j.at("generator");
        if (j.contains("seed")) metadata.seed = j.at("seed").get<std::uint64_t>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError("line " + std::to_string(line_no) + ": malformed metadata record: " +
                        e.what());
      }
      if (dimension == 0) {
        throw DataError("line " + std::to_string(line_no) + ": dimension must be positive");
      }
      have_header = true;
      continue;
    }
    ComparisonRecord r;
    try {
      r = record_from_json(j, dimension);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto [it, inserted] = first_of_triple.emplace(r.triple_id, records.size());
    if (!inserted) {
      const auto& first = records[it->second];
      if (first.x != r.x || first.y1 != r.y1 || first.y2 != r.y2) {
        throw DataError("line " + std::to_string(line_no) + ": triple_id " + r.triple_id +
                        " carries different content than an earlier record");
      }
    }
    records.push_back(std::move(r));
  }
  if (!have_header) throw DataError("empty dataset");
  return PreferenceDataset(dimension, std::move(records), std::move(metadata));
}

SplitMode parse_split_mode(const std::string& text) {
  if (text == "by-triple") return SplitMode::kByTriple;
  if (text == "by-user") return SplitMode::kByUser;
  throw UsageError("unknown split mode '" + text + "' (expected by-triple or by-user)");
}

std::string to_string(SplitMode mode) {
  return mode == SplitMode::kByTriple ? "by-triple" : "by-user";
}

namespace {

// Largest-remainder allocation of n items over three fractions; every
// positive fraction gets at least one item when n allows it.
std::array<std::size_t, 3> allocate(std::size_t n, const std::array<double, 3>& f) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = f[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    used += counts[i];
  }
  while (used < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    counts[best] += 1;
    rem[best] = -1.0;
    ++used;
  }
  for (int i = 0; i < 3; ++i) {
    if (f[i] > 0.0 && counts[i] == 0) {
      int donor = 0;
      for (int k = 1; k < 3; ++k) {
        if (counts[k] > counts[donor]) donor = k;
      }
      if (counts[donor] > 1) {
        counts[donor] -= 1;
        counts[i] += 1;
      }
    }
  }
  return counts;
}

}  // namespace

DatasetSplit split_dataset(const PreferenceDataset& dataset, SplitMode mode,
                           SplitFractions fractions, std::uint64_t seed) {
  const std::array<double, 3> f{fractions.train, fractions.validation, fractions.test};
  double total = 0.0;
  int positive = 0;
  for (double v : f) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("split fractions must be nonnegative");
    total += v;
    if (v > 0.0) ++positive;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("split fractions must sum to 1");

  // Units are triple ids or user ids, in first-appearance order before shuffling.
  std::vector<std::string> units;
  std::unordered_set<std::string> seen;
  for (const auto& r : dataset.records()) {
    const std::string& key = mode == SplitMode::kByTriple ? r.triple_id : r.user_id;
    if (seen.insert(key).second) units.push_back(key);
  }
  if (mode == SplitMode::kByUser) {
    std::sort(units.begin(), units.end());
    if (units.size() < static_cast<std::size_t>(positive)) {
      throw DataError("by-user split needs at least " + std::to_string(positive) +
                      " users, dataset has " + std::to_string(units.size()));
    }
  }
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(units);
  auto counts = allocate(units.size(), f);

  std::unordered_map<std::string, int> part_of;
  std::size_t pos = 0;
  for (int part = 0; part < 3; ++part) {
    for (std::size_t i = 0; i < counts[part]; ++i) part_of[units[pos++]] = part;
  }

  std::array<std::vector<std::size_t>, 3> idx;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    const std::string& key = mode == SplitMode::kByTriple ? r.triple_id : r.user_id;
    idx[part_of.at(key)].push_back(i);
  }
  DatasetSplit split;
  split.mode = mode;
  split.train = dataset.subset(idx[0]);
  split.validation = dataset.subset(idx[1]);
  split.test = dataset.subset(idx[2]);
  return split;
}

TripleGroups group_by_triple(const PreferenceDataset& dataset) {
  TripleGroups groups;
  for (const auto& r : dataset.records()) {
    groups[r.triple_id].push_back(Annotation{r.user_id, r.label});
  }
  return groups;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                    ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace plbench
