#include "cogcn/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cogcn/error.hpp"
#include "cogcn/io.hpp"
#include "cogcn/rng.hpp"

namespace cogcn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string padded(const char* prefix, int value, int width) {
  std::string digits_text = std::to_string(value);
  if (static_cast<int>(digits_text.size()) < width) digits_text.insert(0, width - digits_text.size(), '0');
  return prefix + digits_text;
}

int digits(int n) {
  int w = 1;
  while (n >= 10) {
    n /= 10;
    ++w;
  }
  return w;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].id == id) return i;
  }
  return std::nullopt;
}

Dataset Dataset::subset(const std::set<std::string>& ids) const {
  Dataset out;
  out.d = d;
  out.C = C;
  out.class_names = class_names;
  for (const auto& u : utterances) {
    if (ids.count(u.id)) {
      out.utterances.push_back(u);
      out.speakers.insert(u.speaker);
    }
  }
  return out;
}

Dataset Dataset::for_speakers(const std::set<std::string>& keep) const {
  std::set<std::string> ids;
  for (const auto& u : utterances) {
    if (keep.count(u.speaker)) ids.insert(u.id);
  }
  return subset(ids);
}

FeatureMatrix read_feature_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open feature file: " + path.string());

  const std::string where = path.string() + ":";
  std::string line;
  if (!std::getline(in, line)) throw_data(where + "1: missing header row");
  const auto header = split_commas(trim(line));
  if (header.empty() || trim(header[0]) != "frame_index") {
    throw_data(where + "1: header must start with frame_index");
  }
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1) throw_data(where + "1: header names no feature columns");
  for (int j = 0; j < d; ++j) {
    if (trim(header[j + 1]) != "f" + std::to_string(j)) {
      throw_data(where + "1: expected column f" + std::to_string(j));
    }
  }

  std::vector<double> values;
  long rows = 0;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto cells = split_commas(view);
    const std::string at = where + std::to_string(line_no) + ": ";
    if (static_cast<int>(cells.size()) != d + 1) {
      throw_data(at + "ragged row (" + std::to_string(cells.size()) + " cells, expected " +
                 std::to_string(d + 1) + ")");
    }
    long index = -1;
    auto idx_cell = trim(cells[0]);
    auto [iptr, iec] = std::from_chars(idx_cell.data(), idx_cell.data() + idx_cell.size(), index);
    if (iec != std::errc() || iptr != idx_cell.data() + idx_cell.size()) {
      throw_data(at + "bad frame_index '" + std::string(idx_cell) + "'");
    }
    if (index != rows) {
      throw_data(at + "frame_index must increase from 0 in steps of 1 (got " + std::to_string(index) + ")");
    }
    for (int j = 0; j < d; ++j) {
      auto cell = trim(cells[j + 1]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw_data(at + "unparseable feature value '" + std::string(cell) + "'");
      }
      if (!std::isfinite(v)) throw_data(at + "non-finite feature value");
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw_data(path.string() + ": empty utterance (no frame rows)");

  FeatureMatrix m(rows, d);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

std::string format_feature_csv(const FeatureMatrix& features) {
  std::string out = "frame_index";
  for (Eigen::Index j = 0; j < features.cols(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof buf, features(i, j));
      out += ',';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.C < 1 || static_cast<int>(dataset.class_names.size()) != dataset.C) {
    throw_data("dataset class_names do not match C");
  }
  for (const auto& u : dataset.utterances) {
    if (u.features.rows() < 1) throw_data("empty utterance: " + u.id);
    if (u.features.cols() != dataset.d) {
      throw_data("feature dimension mismatch in " + u.id + ": " + std::to_string(u.features.cols()) +
                 " vs " + std::to_string(dataset.d));
    }
    if (!u.features.allFinite()) throw_data("non-finite feature value in " + u.id);
    if (u.label < 0 || u.label >= dataset.C) throw_data("label out of range in " + u.id);
    if (!dataset.speakers.count(u.speaker)) throw_data("speaker not registered: " + u.speaker);
  }
}

Dataset load_dataset(const fs::path& manifest_path, const std::optional<std::vector<std::string>>& class_names) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw_io("cannot open manifest: " + manifest_path.string());
  const fs::path base = manifest_path.parent_path();

  struct Entry {
    std::string id, path, label, speaker, session;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string at = manifest_path.string() + ":" + std::to_string(line_no) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw_data(at + "invalid JSON: " + e.what());
    }
    Entry entry;
    for (auto [key, field] : {std::pair{"id", &entry.id}, std::pair{"path", &entry.path},
                              std::pair{"label", &entry.label}, std::pair{"speaker", &entry.speaker}}) {
      if (!obj.contains(key) || !obj[key].is_string()) throw_data(at + "missing string field '" + key + "'");
      *field = obj[key].get<std::string>();
    }
    if (obj.contains("session") && obj["session"].is_string()) entry.session = obj["session"].get<std::string>();
    if (entry.id.empty()) throw_data(at + "empty id");
    if (!seen.insert(entry.id).second) throw_data(at + "duplicate utterance id '" + entry.id + "'");
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw_data(manifest_path.string() + ": manifest lists no utterances");

  Dataset ds;
  if (class_names) {
    ds.class_names = *class_names;
    std::sort(ds.class_names.begin(), ds.class_names.end());
  } else {
    std::set<std::string> labels;
    for (const auto& e : entries) labels.insert(e.label);
    ds.class_names.assign(labels.begin(), labels.end());
  }
  ds.C = static_cast<int>(ds.class_names.size());

  for (const auto& e : entries) {
    auto it = std::lower_bound(ds.class_names.begin(), ds.class_names.end(), e.label);
    if (e.label.empty() || it == ds.class_names.end() || *it != e.label) {
      throw_data("unknown label string '" + e.label + "' for utterance " + e.id);
    }
    Utterance u;
    u.id = e.id;
    u.label = static_cast<int>(it - ds.class_names.begin());
    u.speaker = e.speaker;
    u.session = e.session;
    u.features = read_feature_csv(base / e.path);
    if (ds.utterances.empty()) {
      ds.d = static_cast<int>(u.features.cols());
    } else if (u.features.cols() != ds.d) {
      throw_data("feature dimension mismatch: " + e.id + " has d=" + std::to_string(u.features.cols()) +
                 ", expected " + std::to_string(ds.d));
    }
    ds.speakers.insert(u.speaker);
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "features", ec);
  if (ec) throw_io("cannot create " + (dir / "features").string() + ": " + ec.message());
  std::string manifest;
  for (const auto& u : dataset.utterances) {
    const std::string rel = "features/" + u.id + ".csv";
    write_file_atomic(dir / rel, format_feature_csv(u.features));
    json obj = {{"id", u.id},
                {"path", rel},
                {"label", dataset.class_names.at(u.label)},
                {"speaker", u.speaker},
                {"session", u.session}};
    manifest += obj.dump() + "\n";
  }
  write_file_atomic(dir / "manifest.jsonl", manifest);
}

StandardizeStats fit_standardizer(const Dataset& dataset, const std::set<std::string>& include_ids) {
  if (include_ids.empty()) throw_usage("fit_standardizer: include set is empty");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dataset.d);
  long frames = 0;
  std::size_t matched = 0;
  for (const auto& u : dataset.utterances) {
    if (!include_ids.count(u.id)) continue;
    ++matched;
    sum += u.features.colwise().sum().transpose();
    frames += u.features.rows();
  }
  if (matched != include_ids.size()) throw_usage("fit_standardizer: include set names unknown utterance ids");

  StandardizeStats stats;
  stats.mean = sum / static_cast<double>(frames);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(dataset.d);
  for (const auto& u : dataset.utterances) {
    if (!include_ids.count(u.id)) continue;
    sq += (u.features.rowwise() - stats.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  stats.std = (sq / static_cast<double>(frames)).array().sqrt().max(kStdFloor).matrix();
  return stats;
}

FeatureMatrix apply_standardizer(const FeatureMatrix& features, const StandardizeStats& stats) {
  if (features.cols() != stats.mean.size() || stats.std.size() != stats.mean.size()) {
    throw_usage("apply_standardizer: dimension mismatch (features d=" + std::to_string(features.cols()) +
                ", stats d=" + std::to_string(stats.mean.size()) + ")");
  }
  FeatureMatrix out = features;
  out.rowwise() -= stats.mean.transpose();
  out.array().rowwise() /= stats.std.transpose().array();
  return out;
}

Dataset apply_standardizer(const Dataset& dataset, const StandardizeStats& stats) {
  if (stats.mean.size() != dataset.d) {
    throw_usage("apply_standardizer: dataset d=" + std::to_string(dataset.d) + " but stats d=" +
                std::to_string(stats.mean.size()));
  }
  Dataset out = dataset;
  for (auto& u : out.utterances) u.features = apply_standardizer(u.features, stats);
  return out;
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.n_classes < 2) throw_usage("synth: n_classes must be >= 2");
  if (spec.n_speakers < 2) {
    throw_usage("synth: n_speakers must be >= 2 (leave-one-speaker-out evaluation needs at least 2 speakers)");
  }
  if (spec.utt_per_speaker < 1) throw_usage("synth: utt_per_speaker must be >= 1");
  if (spec.frames_lo < 2 || spec.frames_hi < spec.frames_lo) {
    throw_usage("synth: frame range must satisfy 2 <= frames_lo <= frames_hi");
  }
  if (!(spec.noise_frac >= 0.0 && spec.noise_frac < 1.0)) throw_usage("synth: noise_frac must be in [0, 1)");
  if (spec.d < 1) throw_usage("synth: d must be >= 1");
  if (!(spec.cluster_sep >= 0.0) || !std::isfinite(spec.cluster_sep)) {
    throw_usage("synth: cluster_sep must be finite and >= 0");
  }

  Rng rng(derive_seed(spec.seed, "synth"));
  const int d = spec.d;
  auto random_direction = [&] {
    Eigen::VectorXd v(d);
    for (int j = 0; j < d; ++j) v[j] = rng.normal();
    const double norm = v.norm();
    return norm > 0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd(Eigen::VectorXd::Unit(d, 0));
  };

  constexpr double kSpeakerOffsetStd = 0.3;

  std::vector<Eigen::VectorXd> class_centers;
  for (int c = 0; c < spec.n_classes; ++c) class_centers.push_back(spec.cluster_sep * random_direction());
  // Vacuum frames share one center regardless of label.
  const Eigen::VectorXd vacuum_center = spec.cluster_sep * random_direction();
  std::vector<Eigen::VectorXd> speaker_offsets;
  for (int s = 0; s < spec.n_speakers; ++s) {
    Eigen::VectorXd off(d);
    for (int j = 0; j < d; ++j) off[j] = kSpeakerOffsetStd * rng.normal();
    speaker_offsets.push_back(off);
  }

  Dataset ds;
  ds.d = d;
  ds.C = spec.n_classes;
  const int class_width = digits(spec.n_classes - 1);
  for (int c = 0; c < spec.n_classes; ++c) ds.class_names.push_back(padded("c", c, class_width));
  const int spk_width = std::max(2, digits(spec.n_speakers - 1));
  const int sess_width = std::max(2, digits(spec.n_speakers / 2));

  int index = 0;
  for (int s = 0; s < spec.n_speakers; ++s) {
    const std::string speaker = padded("spk", s, spk_width);
    ds.speakers.insert(speaker);
    for (int k = 0; k < spec.utt_per_speaker; ++k) {
      Utterance u;
      u.id = "u" + std::to_string(index++);
      u.label = k % spec.n_classes;
      u.speaker = speaker;
      u.session = padded("sess", s / 2, sess_width);

      const int n = spec.frames_lo + static_cast<int>(rng.below(spec.frames_hi - spec.frames_lo + 1));
      int n_vacuum = static_cast<int>(std::lround(spec.noise_frac * n));
      n_vacuum = std::min(n_vacuum, n - 1);
      std::vector<int> order(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      rng.shuffle(std::span<int>(order));
      std::vector<bool> vacuum(n, false);
      for (int i = 0; i < n_vacuum; ++i) vacuum[order[i]] = true;

      u.features.resize(n, d);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd& center =
            vacuum[i] ? vacuum_center : Eigen::VectorXd(class_centers[u.label] + speaker_offsets[s]);
        for (int j = 0; j < d; ++j) u.features(i, j) = center[j] + rng.normal();
      }
      ds.utterances.push_back(std::move(u));
    }
  }
  return ds;
}

}  // namespace cogcn
