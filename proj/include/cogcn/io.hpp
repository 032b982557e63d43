#pragma once

#include <filesystem>
#include <string>

namespace cogcn {

/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace cogcn

#include <vector>

#include "cogcn/training.hpp"

namespace cogcn {

inline constexpr int kCheckpointFormatVersion = 1;

std::string checkpoint_to_json(const TrainedModel& model);
TrainedModel checkpoint_from_json(const std::string& text);
TrainedModel load_checkpoint(const std::filesystem::path& path);

/// `{"class_names", "folds": [...], "mean_wa", "mean_ua"}`.
std::string cv_metrics_to_json(const CvResult& result, const std::vector<std::string>& class_names);
/// `{"class_names", "n", "wa", "ua", "confusion"}` for a single evaluation.
std::string metrics_to_json(const Metrics& metrics, const std::vector<std::string>& class_names);

/// `epoch,train_loss,val_wa,val_ua`
std::string history_to_csv(const std::vector<EpochRecord>& history);

/// Writes metrics.json plus fold_<speaker>/{checkpoint.json,history.csv}.
void write_cv_outputs(const CvResult& result, const std::vector<std::string>& class_names,
                      const std::filesystem::path& out_dir);

}  // namespace cogcn
