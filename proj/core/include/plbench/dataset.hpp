#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace plbench {

using Json = nlohmann::ordered_json;

/// Dense real vector standing in for a text embedding.
using Embedding = std::vector<double>;

/// Rounds to 9 significant digits, the precision used by every on-disk
/// format. Values passed through here survive a text round trip unchanged.
double quantize(double value);
void quantize_in_place(std::span<double> values);

/// Content hash of a (prompt, response, response) triple.
std::string make_triple_id(std::span<const double> x, std::span<const double> y1,
                           std::span<const double> y2);

/// One annotated pairwise preference. label == 1 means y1 is preferred.
struct ComparisonRecord {
  std::string triple_id;
  std::string user_id;
  Embedding x;
  Embedding y1;
  Embedding y2;
  int label = 0;

  friend bool operator==(const ComparisonRecord&, const ComparisonRecord&) = default;
};

/// Builds a record with quantized embeddings and a content-derived triple_id.
ComparisonRecord make_record(std::string user_id, Embedding x, Embedding y1, Embedding y2,
                             int label);

struct DatasetMetadata {
  Json generator = Json::object();
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetMetadata&, const DatasetMetadata&) = default;
};

/// Immutable collection of comparison records sharing one embedding dimension.
class PreferenceDataset {
 public:
  PreferenceDataset() = default;
  /// Validates dimensions and label values; throws DataError on violation.
  PreferenceDataset(std::size_t dimension, std::vector<ComparisonRecord> records,
                    DatasetMetadata metadata = {});

  std::size_t dimension() const { return dimension_; }
  const std::vector<ComparisonRecord>& records() const { return records_; }
  const ComparisonRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  /// Sorted, de-duplicated user ids.
  const std::vector<std::string>& users() const { return users_; }
  const DatasetMetadata& metadata() const { return metadata_; }

  /// Records at the given indices, in the order given.
  PreferenceDataset subset(std::span<const std::size_t> indices) const;
  /// Indices of the records annotated by `user_id`, in dataset order.
  std::vector<std::size_t> indices_for_user(const std::string& user_id) const;
  PreferenceDataset for_user(const std::string& user_id) const;

  friend bool operator==(const PreferenceDataset&, const PreferenceDataset&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<ComparisonRecord> records_;
  std::vector<std::string> users_;
  DatasetMetadata metadata_;
};

inline constexpr int kDatasetFormatVersion = 1;

PreferenceDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const PreferenceDataset& dataset, const std::filesystem::path& path);

/// Serialization helpers shared by the dataset and sidecar formats.
Json record_to_json(const ComparisonRecord& record);
ComparisonRecord record_from_json(const Json& line, std::size_t dimension);
std::string dataset_to_string(const PreferenceDataset& dataset);

enum class SplitMode { kByTriple, kByUser };

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  PreferenceDataset train;
  PreferenceDataset validation;
  PreferenceDataset test;
  SplitMode mode = SplitMode::kByTriple;
};

DatasetSplit split_dataset(const PreferenceDataset& dataset, SplitMode mode,
                           SplitFractions fractions, std::uint64_t seed);

SplitMode parse_split_mode(const std::string& text);
std::string to_string(SplitMode mode);

struct Annotation {
  std::string user_id;
  int label = 0;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Annotations keyed by triple_id, each list in dataset order.
using TripleGroups = std::map<std::string, std::vector<Annotation>>;

TripleGroups group_by_triple(const PreferenceDataset& dataset);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace plbench
