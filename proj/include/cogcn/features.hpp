#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cogcn {

/// n x d frame features, one row per frame.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Utterance {
  std::string id;
  FeatureMatrix features;
  int label = 0;
  std::string speaker;
  std::string session;
};

struct Dataset {
  std::vector<Utterance> utterances;
  int d = 0;
  int C = 0;
  std::vector<std::string> class_names;  // sorted; index == class id
  std::set<std::string> speakers;

  std::size_t size() const { return utterances.size(); }
  std::optional<std::size_t> find(const std::string& id) const;
  /// Subset preserving order and metadata.
  Dataset subset(const std::set<std::string>& ids) const;
  Dataset for_speakers(const std::set<std::string>& speakers) const;
};

struct StandardizeStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

inline constexpr double kStdFloor = 1e-8;

/// Generator parameters for the synthetic voice/vacuum frame corpus.
struct SynthSpec {
  int n_classes = 4;
  int n_speakers = 8;
  int utt_per_speaker = 20;
  int frames_lo = 20;
  int frames_hi = 40;
  double noise_frac = 0.3;
  int d = 88;
  double cluster_sep = 3.0;
  std::uint64_t seed = 0;
};

/// Reads a JSON Lines manifest plus the per-utterance feature CSVs it names.
/// When class_names is given, labels outside it are rejected; otherwise the
/// sorted set of labels found defines the class indices.
Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::optional<std::vector<std::string>>& class_names = std::nullopt);

/// Writes manifest.jsonl and features/<id>.csv under dir.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

FeatureMatrix read_feature_csv(const std::filesystem::path& path);
std::string format_feature_csv(const FeatureMatrix& features);

StandardizeStats fit_standardizer(const Dataset& dataset, const std::set<std::string>& include_ids);
Dataset apply_standardizer(const Dataset& dataset, const StandardizeStats& stats);
FeatureMatrix apply_standardizer(const FeatureMatrix& features, const StandardizeStats& stats);

Dataset synth_dataset(const SynthSpec& spec);

/// Checks the Dataset invariants (finite values, consistent d, labels < C).
void validate_dataset(const Dataset& dataset);

}  // namespace cogcn
