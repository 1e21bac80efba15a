// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/config.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace effspec {

using json = nlohmann::json;

namespace {

// Line of every value in a JSON text, keyed by dotted path ("a.b[2].c").
class LineMap {
 public:
  explicit LineMap(const std::string& text) : s_(text) {
    skip_ws();
    if (i_ < s_.size()) value("");
  }
  int line(const std::string& path) const {
    std::string p = path;
    while (true) {
      auto it = lines_.find(p);
      if (it != lines_.end()) return it->second;
      const size_t cut = p.find_last_of(".[");
      if (cut == std::string::npos) return p.empty() ? 0 : line("");
      p = p.substr(0, cut);
    }
  }

 private:
  void skip_ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) {
      if (s_[i_] == '\n') ++ln_;
      ++i_;
    }
  }
  std::string string_token() {
    std::string out;
    ++i_;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\' && i_ + 1 < s_.size()) ++i_;
      out += s_[i_++];
    }
    ++i_;
    return out;
  }
  void value(const std::string& path) {
    lines_[path] = ln_;
    if (i_ >= s_.size()) return;
    const char c = s_[i_];
    if (c == '{') {
      ++i_;
      skip_ws();
      while (i_ < s_.size() && s_[i_] != '}') {
        if (s_[i_] != '"') return;
        const std::string key = string_token();
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ':') ++i_;
        skip_ws();
        value(path.empty() ? key : path + "." + key);
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        skip_ws();
      }
      ++i_;
    } else if (c == '[') {
      ++i_;
      skip_ws();
      int idx = 0;
      while (i_ < s_.size() && s_[i_] != ']') {
        value(path + "[" + std::to_string(idx++) + "]");
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
        skip_ws();
      }
      ++i_;
    } else if (c == '"') {
      string_token();
    } else {
      while (i_ < s_.size() && !std::strchr(",]} \t\r\n", s_[i_])) ++i_;
    }
  }

  const std::string& s_;
  size_t i_ = 0;
  int ln_ = 1;
  std::map<std::string, int> lines_;
};

class Reader {
 public:
  Reader(const std::string& source, const LineMap& lines) : source_(source), lines_(lines) {}

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    const int ln = lines_.line(field);
    throw ConfigError(source_ + ":" + std::to_string(ln) + ": " + (field.empty() ? "<root>" : field) + ": " + msg,
                      field, ln);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  void expect_object(const json& j, const std::string& path, const std::set<std::string>& allowed) const {
    if (!j.is_object()) fail(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!allowed.count(it.key())) fail(join(path, it.key()), "unknown key");
  }

  double number(const json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "must be finite");
    return v;
  }
  double positive(const json& j, const std::string& path) const {
    const double v = number(j, path);
    if (!(v > 0)) fail(path, "must be positive");
    return v;
  }
  double nonneg(const json& j, const std::string& path) const {
    const double v = number(j, path);
    if (v < 0) fail(path, "must be non-negative");
    return v;
  }
  long integer(const json& j, const std::string& path) const {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<long>();
  }
  int positive_int(const json& j, const std::string& path) const {
    const long v = integer(j, path);
    if (v < 1 || v > std::numeric_limits<int>::max()) fail(path, "must be a positive integer");
    return static_cast<int>(v);
  }
  bool boolean(const json& j, const std::string& path) const {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
  }
  std::string string(const json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }
  std::vector<double> numbers(const json& j, const std::string& path) const {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }
  Mat matrix(const json& j, const std::string& path) const {
    if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
    const size_t rows = j.size();
    size_t cols = 0;
    for (size_t r = 0; r < rows; ++r) {
      const std::string rp = path + "[" + std::to_string(r) + "]";
      if (!j[r].is_array()) fail(rp, "expected a row array");
      if (r == 0) cols = j[r].size();
      if (j[r].size() != cols || cols == 0) fail(rp, "rows must have equal non-zero length");
    }
    Mat M(rows, cols);
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c)
        M(r, c) = number(j[r][c], path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    return M;
  }

 private:
  std::string source_;
  const LineMap& lines_;
};

json parse_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    int ln = 1;
    for (size_t i = 0; i < std::min(text.size(), static_cast<size_t>(e.byte)); ++i) ln += text[i] == '\n';
    throw ConfigError(source + ":" + std::to_string(ln) + ": syntax error: " + e.what(), "", ln);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ":0: cannot open file", "", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Task parse_task(const json& j, const std::string& path, const Reader& rd) {
  rd.expect_object(j, path, {"k", "C", "weights", "class_map", "lambda", "phi", "mean_gram", "centered", "profile"});
  auto f = [&](const char* key) { return Reader::join(path, key); };
  for (const char* req : {"k", "lambda", "phi", "profile"})
    if (!j.contains(req)) rd.fail(f(req), "required key missing");
  Task t;
  t.k = rd.positive_int(j["k"], f("k"));
  t.C = j.contains("C") ? rd.positive_int(j["C"], f("C")) : t.k;
  t.lambda = rd.positive(j["lambda"], f("lambda"));
  t.phi = rd.positive(j["phi"], f("phi"));
  t.centered = j.contains("centered") && rd.boolean(j["centered"], f("centered"));
  if (j.contains("weights")) {
    const auto w = rd.numbers(j["weights"], f("weights"));
    if (static_cast<int>(w.size()) != t.k) rd.fail(f("weights"), "must have length k");
    t.weights = Eigen::Map<const Vec>(w.data(), t.k);
  } else {
    t.weights = Vec::Constant(t.k, 1.0 / t.k);
  }
  if (j.contains("class_map")) {
    const json& cm = j["class_map"];
    if (!cm.is_array() || static_cast<int>(cm.size()) != t.k) rd.fail(f("class_map"), "must be an array of length k");
    for (size_t i = 0; i < cm.size(); ++i) {
      const std::string p = f("class_map") + "[" + std::to_string(i) + "]";
      const long c = rd.integer(cm[i], p);
      if (c < 0 || c >= t.C) rd.fail(p, "class index out of range");
      t.class_map.push_back(static_cast<int>(c));
    }
  } else {
    t.class_map.resize(t.k);
    for (int i = 0; i < t.k; ++i) t.class_map[i] = i % t.C;
  }
  if (!j.contains("mean_gram") || (j["mean_gram"].is_string() && j["mean_gram"] == "identity")) {
    t.mean_gram = Mat::Identity(t.k, t.k);
  } else {
    t.mean_gram = rd.matrix(j["mean_gram"], f("mean_gram"));
    if (t.mean_gram.rows() != t.k || t.mean_gram.cols() != t.k) rd.fail(f("mean_gram"), "must be k x k");
  }

  const json& pj = j["profile"];
  const std::string pp = f("profile");
  rd.expect_object(pj, pp, {"kind", "alpha", "unit", "hidden", "second_layer", "activation"});
  if (!pj.contains("kind")) rd.fail(Reader::join(pp, "kind"), "required key missing");
  const std::string kind = rd.string(pj["kind"], Reader::join(pp, "kind"));
  try {
    t.profile.kind = profile_kind_from_string(kind);
  } catch (const std::exception&) {
    rd.fail(Reader::join(pp, "kind"), "unknown profile kind '" + kind + "'");
  }
  if (t.profile.kind == ProfileKind::Custom) rd.fail(Reader::join(pp, "kind"), "custom profiles need code, not config");
  if (pj.contains("alpha")) t.profile.alpha = static_cast<int>(rd.integer(pj["alpha"], Reader::join(pp, "alpha")));
  if (pj.contains("unit")) t.profile.unit = static_cast<int>(rd.integer(pj["unit"], Reader::join(pp, "unit")));
  if (pj.contains("hidden")) t.profile.hidden = rd.positive_int(pj["hidden"], Reader::join(pp, "hidden"));
  if (pj.contains("second_layer")) t.profile.second_layer = rd.matrix(pj["second_layer"], Reader::join(pp, "second_layer"));
  if (pj.contains("activation")) {
    const std::string a = rd.string(pj["activation"], Reader::join(pp, "activation"));
    try {
      t.profile.activation = builtin_activation(a);
    } catch (const std::exception&) {
      rd.fail(Reader::join(pp, "activation"), "unknown activation '" + a + "'");
    }
  }
  try {
    t.validate();
  } catch (const std::exception& e) {
    rd.fail(path, e.what());
  }
  return t;
}

void parse_solver(const json& j, const std::string& path, const Reader& rd, SolverConfig& s) {
  rd.expect_object(j, path, {"scaling", "residual_tol", "max_iter", "merge_mass", "cross_validate", "edge_agree",
                             "expect", "outliers", "density_points", "density_eta"});
  auto f = [&](const char* key) { return Reader::join(path, key); };
  if (j.contains("scaling")) {
    const std::string v = rd.string(j["scaling"], f("scaling"));
    if (v == "data") s.scaling = Scaling::Data;
    else if (v == "theory") s.scaling = Scaling::Theory;
    else rd.fail(f("scaling"), "must be 'data' or 'theory'");
  }
  if (j.contains("residual_tol")) s.bulk.residual_tol = rd.positive(j["residual_tol"], f("residual_tol"));
  if (j.contains("max_iter")) s.bulk.max_iter = rd.positive_int(j["max_iter"], f("max_iter"));
  if (j.contains("merge_mass")) s.bulk.merge_mass = rd.positive(j["merge_mass"], f("merge_mass"));
  if (j.contains("cross_validate")) s.bulk.cross_validate = rd.boolean(j["cross_validate"], f("cross_validate"));
  if (j.contains("edge_agree")) s.bulk.edge_agree = rd.positive(j["edge_agree"], f("edge_agree"));
  if (j.contains("density_points")) s.density_points = rd.positive_int(j["density_points"], f("density_points"));
  if (j.contains("density_eta")) s.density_eta = rd.positive(j["density_eta"], f("density_eta"));
  if (j.contains("expect")) {
    const json& e = j["expect"];
    const std::string ep = f("expect");
    rd.expect_object(e, ep, {"method", "nodes", "samples", "seed", "max_gh_dim"});
    auto g = [&](const char* key) { return Reader::join(ep, key); };
    if (e.contains("method")) {
      const std::string m = rd.string(e["method"], g("method"));
      if (m == "auto") s.expect.method = ExpectMethod::Auto;
      else if (m == "gauss-hermite") s.expect.method = ExpectMethod::GaussHermite;
      else if (m == "monte-carlo") s.expect.method = ExpectMethod::MonteCarlo;
      else rd.fail(g("method"), "must be 'auto', 'gauss-hermite' or 'monte-carlo'");
    }
    if (e.contains("nodes")) s.expect.nodes = rd.positive_int(e["nodes"], g("nodes"));
    if (e.contains("samples")) s.expect.samples = rd.positive_int(e["samples"], g("samples"));
    if (e.contains("seed")) {
      const long v = rd.integer(e["seed"], g("seed"));
      if (v < 0) rd.fail(g("seed"), "must be non-negative");
      s.expect.seed = static_cast<std::uint64_t>(v);
    }
    if (e.contains("max_gh_dim")) s.expect.max_gh_dim = rd.positive_int(e["max_gh_dim"], g("max_gh_dim"));
  }
  if (j.contains("outliers")) {
    const json& o = j["outliers"];
    const std::string op = f("outliers");
    rd.expect_object(o, op, {"edge_margin", "cluster_rel", "cluster_abs", "kernel_tol", "zero_exclusion"});
    auto g = [&](const char* key) { return Reader::join(op, key); };
    if (o.contains("edge_margin")) s.outliers.edge_margin = rd.positive(o["edge_margin"], g("edge_margin"));
    if (o.contains("cluster_rel")) s.outliers.cluster_rel = rd.positive(o["cluster_rel"], g("cluster_rel"));
    if (o.contains("cluster_abs")) s.outliers.cluster_abs = rd.positive(o["cluster_abs"], g("cluster_abs"));
    if (o.contains("kernel_tol")) s.outliers.kernel_tol = rd.positive(o["kernel_tol"], g("kernel_tol"));
    if (o.contains("zero_exclusion")) s.outliers.zero_exclusion = rd.positive(o["zero_exclusion"], g("zero_exclusion"));
  }
}

void parse_dynamics(const json& j, const std::string& path, const Reader& rd, DynamicsConfig& d) {
  rd.expect_object(j, path, {"c_eta", "beta", "dt", "T", "checkpoints", "save_every", "check_halving", "psd_tol"});
  auto f = [&](const char* key) { return Reader::join(path, key); };
  if (j.contains("c_eta")) d.c_eta = rd.nonneg(j["c_eta"], f("c_eta"));
  if (j.contains("beta")) d.beta = rd.nonneg(j["beta"], f("beta"));
  if (j.contains("dt")) d.dt = rd.positive(j["dt"], f("dt"));
  if (j.contains("T")) d.T = rd.nonneg(j["T"], f("T"));
  if (j.contains("checkpoints")) {
    d.checkpoints = rd.numbers(j["checkpoints"], f("checkpoints"));
    for (size_t i = 0; i < d.checkpoints.size(); ++i)
      if (d.checkpoints[i] < 0) rd.fail(f("checkpoints") + "[" + std::to_string(i) + "]", "must be non-negative");
  }
  if (j.contains("save_every")) d.save_every = rd.positive_int(j["save_every"], f("save_every"));
  if (j.contains("check_halving")) d.check_halving = rd.boolean(j["check_halving"], f("check_halving"));
  if (j.contains("psd_tol")) d.psd_tol = rd.positive(j["psd_tol"], f("psd_tol"));
}

void parse_empirical(const json& j, const std::string& path, const Reader& rd, EmpiricalConfig& e) {
  rd.expect_object(j, path, {"d", "seeds", "data_mode", "times", "bins"});
  auto f = [&](const char* key) { return Reader::join(path, key); };
  if (j.contains("d")) e.d = rd.positive_int(j["d"], f("d"));
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (!s.is_array() || s.empty()) rd.fail(f("seeds"), "expected a non-empty array of integers");
    e.seeds.clear();
    for (size_t i = 0; i < s.size(); ++i) {
      const std::string p = f("seeds") + "[" + std::to_string(i) + "]";
      const long v = rd.integer(s[i], p);
      if (v < 0) rd.fail(p, "must be non-negative");
      e.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  if (j.contains("data_mode")) {
    const std::string m = rd.string(j["data_mode"], f("data_mode"));
    if (m != "test" && m != "train") rd.fail(f("data_mode"), "must be 'test' or 'train'");
    e.mode = data_mode_from_string(m);
  }
  if (j.contains("times")) {
    e.times = rd.numbers(j["times"], f("times"));
    if (e.times.empty()) rd.fail(f("times"), "must not be empty");
    for (size_t i = 0; i < e.times.size(); ++i)
      if (e.times[i] < 0) rd.fail(f("times") + "[" + std::to_string(i) + "]", "must be non-negative");
  }
  if (j.contains("bins")) e.bins = rd.positive_int(j["bins"], f("bins"));
}

const std::set<std::string> kFigures = {"static", "gradient-lambda", "hessian-training", "gradient-training",
                                        "two-layer-xor"};

void parse_figure(const json& j, const std::string& path, const Reader& rd, FigureConfig& fc) {
  rd.expect_object(j, path, {"name", "lambdas", "modes"});
  auto f = [&](const char* key) { return Reader::join(path, key); };
  if (!j.contains("name")) rd.fail(f("name"), "required key missing");
  fc.name = rd.string(j["name"], f("name"));
  if (!kFigures.count(fc.name)) rd.fail(f("name"), "unknown figure '" + fc.name + "'");
  if (j.contains("lambdas")) {
    fc.lambdas = rd.numbers(j["lambdas"], f("lambdas"));
    for (size_t i = 0; i < fc.lambdas.size(); ++i)
      if (!(fc.lambdas[i] > 0)) rd.fail(f("lambdas") + "[" + std::to_string(i) + "]", "must be positive");
  }
  if (j.contains("modes")) {
    const json& m = j["modes"];
    if (!m.is_array() || m.empty()) rd.fail(f("modes"), "expected a non-empty array");
    fc.modes.clear();
    for (size_t i = 0; i < m.size(); ++i) {
      const std::string p = f("modes") + "[" + std::to_string(i) + "]";
      const std::string v = rd.string(m[i], p);
      if (v != "test" && v != "train") rd.fail(p, "must be 'test' or 'train'");
      fc.modes.push_back(data_mode_from_string(v));
    }
  }
}

json matrix_json(const Mat& M) {
  json out = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(row);
  }
  return out;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source, const std::string& base_dir) {
  const json root = parse_text(text, source);
  const LineMap lines(text);
  const Reader rd(source, lines);
  rd.expect_object(root, "", {"task", "init", "solver", "dynamics", "empirical", "figure", "output"});
  if (!root.contains("task")) rd.fail("task", "required key missing");
  Scenario s;
  s.source = source;
  if (root["task"].is_string()) {
    std::filesystem::path p = root["task"].get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    const std::string ttext = read_file(p.string());
    const LineMap tlines(ttext);
    const Reader trd(p.string(), tlines);
    s.task = parse_task(parse_text(ttext, p.string()), "", trd);
  } else {
    s.task = parse_task(root["task"], "task", rd);
  }
  if (root.contains("init")) {
    const json& j = root["init"];
    rd.expect_object(j, "init", {"kind", "G"});
    const std::string kind = j.contains("kind") ? rd.string(j["kind"], "init.kind") : "zero";
    if (kind == "zero") s.init.kind = InitKind::Zero;
    else if (kind == "gaussian") s.init.kind = InitKind::Gaussian;
    else if (kind == "explicit") s.init.kind = InitKind::Explicit;
    else rd.fail("init.kind", "must be 'zero', 'gaussian' or 'explicit'");
    if (s.init.kind == InitKind::Explicit) {
      if (!j.contains("G")) rd.fail("init.G", "required for explicit init");
      s.init.G = rd.matrix(j["G"], "init.G");
      if (s.init.G.rows() != s.task.q() || s.init.G.cols() != s.task.q()) rd.fail("init.G", "must be q x q");
      try {
        (void)psd_sqrt(0.5 * (s.init.G + s.init.G.transpose()));
      } catch (const std::exception& e) {
        rd.fail("init.G", e.what());
      }
    } else if (j.contains("G")) {
      rd.fail("init.G", "only allowed with kind 'explicit'");
    }
  }
  if (root.contains("solver")) parse_solver(root["solver"], "solver", rd, s.solver);
  if (root.contains("dynamics")) parse_dynamics(root["dynamics"], "dynamics", rd, s.dynamics);
  if (root.contains("empirical")) parse_empirical(root["empirical"], "empirical", rd, s.empirical);
  if (root.contains("figure")) parse_figure(root["figure"], "figure", rd, s.figure);
  if (root.contains("output")) s.output = rd.string(root["output"], "output");
  if (s.empirical.d < s.task.k) rd.fail("empirical.d", "must be at least k");
  return s;
}

Scenario load_scenario(const std::string& path) {
  const std::string text = read_file(path);
  const std::filesystem::path p(path);
  return parse_scenario(text, path, p.has_parent_path() ? p.parent_path().string() : ".");
}

std::string canonical_json(const Scenario& s) {
  const Task& t = s.task;
  json task = {{"k", t.k},
               {"C", t.C},
               {"weights", std::vector<double>(t.weights.data(), t.weights.data() + t.weights.size())},
               {"class_map", t.class_map},
               {"lambda", t.lambda},
               {"phi", t.phi},
               {"mean_gram", matrix_json(t.mean_gram)},
               {"centered", t.centered}};
  json prof = {{"kind", to_string(t.profile.kind)}, {"alpha", t.profile.alpha}};
  if (t.profile.hidden > 0) {
    prof["hidden"] = t.profile.hidden;
    prof["unit"] = t.profile.unit;
    prof["second_layer"] = matrix_json(t.profile.second_layer);
  }
  if (!t.profile.activation.name.empty()) prof["activation"] = t.profile.activation.name;
  task["profile"] = prof;

  json init = {{"kind", s.init.kind == InitKind::Zero ? "zero" : s.init.kind == InitKind::Gaussian ? "gaussian" : "explicit"}};
  if (s.init.kind == InitKind::Explicit) init["G"] = matrix_json(s.init.G);

  const auto& sv = s.solver;
  const char* method = sv.expect.method == ExpectMethod::Auto           ? "auto"
                       : sv.expect.method == ExpectMethod::GaussHermite ? "gauss-hermite"
                                                                        : "monte-carlo";
  json solver = {{"scaling", to_string(sv.scaling)},
                 {"residual_tol", sv.bulk.residual_tol},
                 {"max_iter", sv.bulk.max_iter},
                 {"merge_mass", sv.bulk.merge_mass},
                 {"cross_validate", sv.bulk.cross_validate},
                 {"edge_agree", sv.bulk.edge_agree},
                 {"density_points", sv.density_points},
                 {"expect",
                  {{"method", method},
                   {"nodes", sv.expect.nodes},
                   {"samples", sv.expect.samples},
                   {"seed", sv.expect.seed},
                   {"max_gh_dim", sv.expect.max_gh_dim}}},
                 {"outliers",
                  {{"edge_margin", sv.outliers.edge_margin},
                   {"cluster_rel", sv.outliers.cluster_rel},
                   {"cluster_abs", sv.outliers.cluster_abs},
                   {"kernel_tol", sv.outliers.kernel_tol},
                   {"zero_exclusion", sv.outliers.zero_exclusion}}}};
  if (sv.density_eta) solver["density_eta"] = *sv.density_eta;

  const auto& dc = s.dynamics;
  json dyn = {{"c_eta", dc.c_eta},         {"beta", dc.beta},
              {"dt", dc.dt},               {"T", dc.T},
              {"checkpoints", dc.checkpoints}, {"save_every", dc.save_every},
              {"check_halving", dc.check_halving}, {"psd_tol", dc.psd_tol}};

  const auto& ec = s.empirical;
  json emp = {{"d", ec.d}, {"seeds", ec.seeds}, {"data_mode", to_string(ec.mode)}, {"times", ec.times}, {"bins", ec.bins}};

  json root = {{"task", task}, {"init", init}, {"solver", solver}, {"dynamics", dyn}, {"empirical", emp}};
  if (!s.figure.name.empty()) {
    std::vector<std::string> modes;
    for (DataMode m : s.figure.modes) modes.push_back(to_string(m));
    root["figure"] = {{"name", s.figure.name}, {"lambdas", s.figure.lambdas}, {"modes", modes}};
  }
  return root.dump();
}

SummaryMatrix initial_summary(const Scenario& s) {
  switch (s.init.kind) {
    case InitKind::Zero:
      return zero_init_summary(s.task);
    case InitKind::Gaussian:
      return gaussian_init_summary(s.task);
    case InitKind::Explicit:
      break;
  }
  const Mat G = 0.5 * (s.init.G + s.init.G.transpose());
  return SummaryMatrix::from_gram(G, s.task.param_count(), s.task.k);
}

}  // namespace effspec
