#include "cogcn/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cogcn/error.hpp"

namespace cogcn {

namespace fs = std::filesystem;
using json = nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw_io("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw_io("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw_io("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

json matrix_json(const Mat<double>& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Mat<double> matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw_data("checkpoint: bad shape for " + name);
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw_data("checkpoint: bad shape for " + name);
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const json& j, Eigen::Index size, const std::string& name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) throw_data("checkpoint: bad shape for " + name);
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = j[i].get<double>();
  return v;
}

json confusion_json(const Metrics& m) { return m.confusion; }

}  // namespace

std::string checkpoint_to_json(const TrainedModel& model) {
  const ModelConfig& c = model.config;
  json config = {{"d", c.d},
                 {"z", c.z},
                 {"K", c.K},
                 {"C", c.C},
                 {"use_pre", c.use_pre},
                 {"use_skip", c.use_skip},
                 {"dropout_p", c.dropout_p},
                 {"self_in_aggregation", c.self_in_aggregation},
                 {"graph_kind", to_string(model.graph_kind)},
                 {"gamma", model.gamma},
                 {"precision", to_string(model.precision)}};
  json params = json::object();
  const ModelParams<double>& p = model.params;
  if (c.use_pre) {
    params["W_p"] = matrix_json(p.W_p);
    params["b_p"] = vector_json(p.b_p);
  }
  json layers = json::array();
  for (const auto& w : p.W_e) layers.push_back(matrix_json(w));
  params["W_e"] = std::move(layers);
  params["W_o"] = matrix_json(p.W_o);
  params["b_o"] = vector_json(p.b_o);

  json obj = {{"format_version", kCheckpointFormatVersion},
              {"config", std::move(config)},
              {"class_names", model.class_names},
              {"standardizer",
               {{"mean", vector_json(model.standardizer.mean)}, {"std", vector_json(model.standardizer.std)}}},
              {"params", std::move(params)}};
  return obj.dump() + "\n";
}

TrainedModel checkpoint_from_json(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw_data(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (obj.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw_data("checkpoint: unsupported format_version");
    }
    TrainedModel model;
    const json& c = obj.at("config");
    ModelConfig& mc = model.config;
    mc.d = c.at("d").get<int>();
    mc.z = c.at("z").get<int>();
    mc.K = c.at("K").get<int>();
    mc.C = c.at("C").get<int>();
    mc.use_pre = c.at("use_pre").get<bool>();
    mc.use_skip = c.at("use_skip").get<bool>();
    mc.dropout_p = c.at("dropout_p").get<double>();
    mc.self_in_aggregation = c.at("self_in_aggregation").get<bool>();
    mc.validate();
    model.graph_kind = parse_graph_kind(c.at("graph_kind").get<std::string>());
    model.gamma = c.at("gamma").get<double>();
    model.precision = parse_precision(c.at("precision").get<std::string>());
    model.class_names = obj.at("class_names").get<std::vector<std::string>>();
    if (static_cast<int>(model.class_names.size()) != mc.C) throw_data("checkpoint: class_names length != C");

    const json& s = obj.at("standardizer");
    model.standardizer.mean = vector_from(s.at("mean"), mc.d, "standardizer.mean");
    model.standardizer.std = vector_from(s.at("std"), mc.d, "standardizer.std");

    const json& p = obj.at("params");
    ModelParams<double>& mp = model.params;
    if (mc.use_pre) {
      mp.W_p = matrix_from(p.at("W_p"), mc.z, mc.d, "W_p");
      mp.b_p = vector_from(p.at("b_p"), mc.z, "b_p");
    }
    const json& layers = p.at("W_e");
    if (!layers.is_array() || static_cast<int>(layers.size()) != mc.K) throw_data("checkpoint: W_e must have K layers");
    for (int k = 0; k < mc.K; ++k) {
      mp.W_e.push_back(matrix_from(layers[k], mc.z, k == 0 ? mc.mp_input_width() : mc.z, "W_e" + std::to_string(k)));
    }
    mp.W_o = matrix_from(p.at("W_o"), mc.C, mc.z, "W_o");
    mp.b_o = vector_from(p.at("b_o"), mc.C, "b_o");
    return model;
  } catch (const json::exception& e) {
    throw_data(std::string("checkpoint: ") + e.what());
  }
}

TrainedModel load_checkpoint(const fs::path& path) {
  try {
    return checkpoint_from_json(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string cv_metrics_to_json(const CvResult& result, const std::vector<std::string>& class_names) {
  json folds = json::array();
  for (const auto& f : result.folds) {
    folds.push_back({{"speaker", f.test_speaker},
                     {"val_speaker", f.val_speaker},
                     {"wa", f.metrics.wa},
                     {"ua", f.metrics.ua},
                     {"confusion", confusion_json(f.metrics)},
                     {"selected_K", f.selected_K},
                     {"selected_gamma", f.selected_gamma ? json(*f.selected_gamma) : json(nullptr)}});
  }
  json obj = {{"class_names", class_names},
              {"folds", std::move(folds)},
              {"mean_wa", result.mean_wa},
              {"mean_ua", result.mean_ua}};
  return obj.dump(2) + "\n";
}

std::string metrics_to_json(const Metrics& metrics, const std::vector<std::string>& class_names) {
  json obj = {{"class_names", class_names},
              {"n", metrics.total()},
              {"wa", metrics.wa},
              {"ua", metrics.ua},
              {"confusion", confusion_json(metrics)}};
  return obj.dump(2) + "\n";
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_wa,val_ua\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val_wa) + "," +
           format_double(r.val_ua) + "\n";
  }
  return out;
}

void write_cv_outputs(const CvResult& result, const std::vector<std::string>& class_names, const fs::path& out_dir) {
  for (const auto& f : result.folds) {
    const fs::path dir = out_dir / ("fold_" + f.test_speaker);
    write_file_atomic(dir / "checkpoint.json", checkpoint_to_json(f.model));
    write_file_atomic(dir / "history.csv", history_to_csv(f.history));
  }
  write_file_atomic(out_dir / "metrics.json", cv_metrics_to_json(result, class_names));
}

}  // namespace cogcn
