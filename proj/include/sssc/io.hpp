#pragma once

// Dataset CSV ingestion, model JSON persistence and atomic file output.

#include "sssc/common.hpp"
#include "sssc/trainer.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unistd.h>
#include <vector>

namespace sssc {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move output into place at " + path.string());
  }
}

// ---- matrices ---------------------------------------------------------------

inline json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
  json data = json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  try {
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Index>(data.size()) != rows * cols)
      throw DataError(what + ": data length does not match rows*cols");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

// ---- hyperparameters ---------------------------------------------------------

inline json hyperparams_to_json(const Hyperparams& hp) {
  json j{{"beta", hp.beta},     {"gamma", hp.gamma},   {"m", hp.m},
         {"radius_b", hp.radius_b}, {"radius_w", hp.radius_w}, {"k", hp.k},
         {"T", hp.T},           {"T_init", hp.T_init}, {"early_stop", hp.early_stop},
         {"inference_iterations", hp.inference_iterations}};
  j["alpha"] = hp.alpha ? json(*hp.alpha) : json(nullptr);
  return j;
}

inline Hyperparams hyperparams_from_json(const json& j) {
  static const std::set<std::string> known{"alpha", "beta", "gamma", "m", "radius_b", "radius_w", "k",
                                           "T", "T_init", "early_stop", "inference_iterations"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw DataError("hyperparams: unknown key '" + key + "'");
  Hyperparams hp;
  try {
    if (j.contains("alpha") && !j["alpha"].is_null()) hp.alpha = j["alpha"].get<double>();
    if (j.contains("beta")) hp.beta = j["beta"].get<double>();
    if (j.contains("gamma")) hp.gamma = j["gamma"].get<double>();
    if (j.contains("m")) hp.m = j["m"].get<Index>();
    if (j.contains("radius_b")) hp.radius_b = j["radius_b"].get<double>();
    if (j.contains("radius_w")) hp.radius_w = j["radius_w"].get<double>();
    if (j.contains("k")) hp.k = j["k"].get<Index>();
    if (j.contains("T")) hp.T = j["T"].get<int>();
    if (j.contains("T_init")) hp.T_init = j["T_init"].get<int>();
    if (j.contains("early_stop")) hp.early_stop = j["early_stop"].get<double>();
    if (j.contains("inference_iterations")) hp.inference_iterations = j["inference_iterations"].get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("hyperparams: ") + e.what());
  }
  return hp;
}

// ---- model ------------------------------------------------------------------

inline json model_to_json(const Model& model, bool with_timestamp = true) {
  json j;
  j["format_version"] = kFormatVersion;
  if (with_timestamp) j["created_at"] = utc_timestamp();
  j["dimensions"] = {{"d", model.dim()},
                     {"m", model.atoms()},
                     {"c", model.classes()},
                     {"n", model.train_features.cols()},
                     {"labeled", model.labeled}};
  j["codebook"] = matrix_to_json(model.codebook.columns);
  j["codebook"]["radius"] = model.codebook.radius;
  j["classifier"] = matrix_to_json(model.classifier);
  j["train_labels"] = matrix_to_json(model.train_labels);
  j["train_features"] = matrix_to_json(model.train_features);
  j["hyperparams"] = hyperparams_to_json(model.hyperparams);
  j["graph_options"] = {{"k", model.graph_options.k}, {"qp_tolerance", model.graph_options.qp_tolerance}};
  j["objective_trace"] = model.objective_trace;
  j["class_names"] = model.class_names;
  return j;
}

inline Model model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw DataError("model: unsupported format_version " + j.at("format_version").dump());
    Model model;
    model.codebook.columns = matrix_from_json(j.at("codebook"), "codebook");
    model.codebook.radius = j.at("codebook").at("radius").get<double>();
    model.classifier = matrix_from_json(j.at("classifier"), "classifier");
    model.train_labels = matrix_from_json(j.at("train_labels"), "train_labels");
    model.train_features = matrix_from_json(j.at("train_features"), "train_features");
    model.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    model.graph_options.k = j.at("graph_options").at("k").get<Index>();
    model.graph_options.qp_tolerance = j.at("graph_options").at("qp_tolerance").get<double>();
    model.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    model.class_names = j.at("class_names").get<std::vector<std::string>>();

    const auto& dims = j.at("dimensions");
    model.labeled = dims.at("labeled").get<Index>();
    const Index d = dims.at("d").get<Index>(), m = dims.at("m").get<Index>(), c = dims.at("c").get<Index>(),
                n = dims.at("n").get<Index>();
    if (model.codebook.columns.rows() != d || model.codebook.columns.cols() != m || model.classifier.rows() != c ||
        model.classifier.cols() != m || model.train_labels.rows() != c || model.train_labels.cols() != n ||
        model.train_features.rows() != d || model.train_features.cols() != n)
      throw DataError("model: matrix shapes disagree with declared dimensions");
    if (!model.class_names.empty() && static_cast<Index>(model.class_names.size()) != c)
      throw DataError("model: class_names length differs from class count");
    if (!model.hyperparams.alpha) throw DataError("model: alpha missing");
    model.hyperparams.validate();
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const Model& model) {
  write_file_atomic(path, model_to_json(model).dump(2) + "\n");
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline Model load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

// ---- datasets ---------------------------------------------------------------

struct Dataset {
  std::vector<std::string> ids;
  Matrix features;                         // d x n
  std::vector<std::optional<Index>> labels;  // per sample, into class_names
  std::vector<std::string> class_names;    // sorted unique

  Index size() const { return features.cols(); }
  Index labeled_count() const {
    return static_cast<Index>(std::count_if(labels.begin(), labels.end(), [](const auto& v) { return v.has_value(); }));
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string where(const std::string& path, std::size_t line) { return path + ":" + std::to_string(line) + ": "; }

}  // namespace detail

/// Features CSV has header "id,f1,...,fd". Labels CSV has header "id,label";
/// rows may be missing or have an empty label for unlabeled samples.
inline Dataset load_dataset(const std::string& features_path, const std::optional<std::string>& labels_path = {}) {
  Dataset ds;
  std::ifstream is(features_path);
  if (!is) throw DataError("cannot open features file " + features_path);

  std::string line;
  std::size_t lineno = 0;
  Index d = 0;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::size_t> position;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    if (!header) {
      if (fields.empty() || fields[0] != "id")
        throw DataError(detail::where(features_path, lineno) + "header must start with 'id'");
      d = static_cast<Index>(fields.size()) - 1;
      header = true;
      continue;
    }
    if (static_cast<Index>(fields.size()) != d + 1)
      throw DataError(detail::where(features_path, lineno) + "expected " + std::to_string(d) + " features, found " +
                      std::to_string(fields.size() - 1));
    std::string id(fields[0]);
    if (id.empty()) throw DataError(detail::where(features_path, lineno) + "empty id");
    if (position.count(id)) throw DataError(detail::where(features_path, lineno) + "duplicate id '" + id + "'");
    std::vector<double> row(static_cast<std::size_t>(d));
    for (Index f = 0; f < d; ++f) {
      auto text = fields[static_cast<std::size_t>(f + 1)];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
        throw DataError(detail::where(features_path, lineno) + "bad numeric value '" + std::string(text) + "'");
      row[static_cast<std::size_t>(f)] = v;
    }
    position[id] = rows.size();
    ds.ids.push_back(std::move(id));
    rows.push_back(std::move(row));
  }
  ds.features.resize(d, static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Index f = 0; f < d; ++f) ds.features(f, static_cast<Index>(i)) = rows[i][static_cast<std::size_t>(f)];
  ds.labels.assign(rows.size(), std::nullopt);

  if (!labels_path) return ds;
  std::ifstream ls(*labels_path);
  if (!ls) throw DataError("cannot open labels file " + *labels_path);
  std::vector<std::optional<std::string>> names(rows.size());
  std::set<std::string> seen;
  lineno = 0;
  header = false;
  while (std::getline(ls, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    if (!header) {
      if (fields.size() != 2 || fields[0] != "id" || fields[1] != "label")
        throw DataError(detail::where(*labels_path, lineno) + "header must be 'id,label'");
      header = true;
      continue;
    }
    if (fields.size() != 2) throw DataError(detail::where(*labels_path, lineno) + "expected 2 fields");
    std::string id(fields[0]);
    auto it = position.find(id);
    if (it == position.end())
      throw DataError(detail::where(*labels_path, lineno) + "id '" + id + "' not found in features");
    if (!seen.insert(id).second)
      throw DataError(detail::where(*labels_path, lineno) + "duplicate id '" + id + "'");
    if (!fields[1].empty()) names[it->second] = std::string(fields[1]);
  }
  std::set<std::string> classes;
  for (const auto& n : names)
    if (n) classes.insert(*n);
  ds.class_names.assign(classes.begin(), classes.end());
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i])
      ds.labels[i] = static_cast<Index>(
          std::lower_bound(ds.class_names.begin(), ds.class_names.end(), *names[i]) - ds.class_names.begin());
  return ds;
}

}  // namespace sssc
