// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "effspec/config.hpp"
#include "json.hpp"

namespace effspec {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

// Bad or missing inputs other than the config itself (exit 1).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json jnum(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

double from_jnum(const json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  return NAN;
}

json mat_json(const Mat& M) {
  json out = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(jnum(M(r, c)));
    out.push_back(row);
  }
  return out;
}

Mat mat_from_json(const json& j) {
  if (!j.is_array() || j.empty()) return Mat();
  Mat M(j.size(), j[0].size());
  for (size_t r = 0; r < j.size(); ++r)
    for (size_t c = 0; c < j[r].size(); ++c) M(r, c) = from_jnum(j[r][c]);
  return M;
}

json vec_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(jnum(v(i)));
  return out;
}

// Files are written to a staging directory and renamed into place only when
// the whole command succeeded.
class Bundle {
 public:
  Bundle(fs::path out, std::string command, std::string config_hash)
      : out_(std::move(out)), command_(std::move(command)), hash_(std::move(config_hash)) {
    fs::create_directories(out_);
    staging_ = out_ / (".staging-" + command_);
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~Bundle() {
    std::error_code ec;
    if (!committed_) fs::remove_all(staging_, ec);
  }
  void add(const std::string& name, const std::string& content) {
    write(name, content);
    json meta = {{"file", name},
                 {"command", command_},
                 {"config_sha256", hash_},
                 {"version", EFFSPEC_VERSION},
                 {"content_sha256", sha256_hex(content)}};
    write(name + ".meta.json", meta.dump(2) + "\n");
  }
  void add_json(const std::string& name, const json& j) { add(name, j.dump(2) + "\n"); }
  void commit() {
    for (const auto& f : files_) {
      const fs::path dst = out_ / f;
      fs::create_directories(dst.parent_path());
      fs::rename(staging_ / f, dst);
    }
    fs::remove_all(staging_);
    committed_ = true;
  }

 private:
  void write(const std::string& name, const std::string& content) {
    const fs::path p = staging_ / name;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << content;
    if (!f) throw std::runtime_error("cannot write " + p.string());
    files_.push_back(name);
  }
  fs::path out_, staging_;
  std::string command_, hash_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

struct Context {
  Scenario s;
  std::string hash;
  fs::path out;
  fs::path inputs;
  std::string replay;
  int threads = 1;
};

json support_json(const SupportSet& sup, Scaling scaling) {
  json iv = json::array(), gaps = json::array();
  for (const auto& i : sup.intervals) iv.push_back({jnum(i.first), jnum(i.second)});
  for (const auto& g : sup.gaps) gaps.push_back({{"lo", jnum(g.lo)}, {"hi", jnum(g.hi)}});
  return {{"scaling", to_string(scaling)}, {"intervals", iv},   {"gaps", gaps},
          {"zero_atom", jnum(sup.zero_atom)}, {"lower", jnum(sup.lower())}, {"upper", jnum(sup.upper())},
          {"warnings", sup.warnings}};
}

json root_json(const OutlierRoot& r) {
  return {{"z", jnum(r.z)},
          {"multiplicity", r.multiplicity},
          {"S", jnum(r.S)},
          {"zero_root", r.zero_root},
          {"vectors", mat_json(r.vectors)},
          {"projections", mat_json(r.projections)},
          {"residuals", vec_json(r.residuals)},
          {"norm_residuals", vec_json(r.norm_residuals)}};
}

json report_json(const OutlierReport& rep) {
  json gaps = json::array();
  for (const auto& g : rep.gaps) {
    json roots = json::array();
    for (const auto& r : g.roots) roots.push_back(root_json(r));
    gaps.push_back({{"lo", jnum(g.gap.lo)},
                    {"hi", jnum(g.gap.hi)},
                    {"search_lo", jnum(g.search_lo)},
                    {"search_hi", jnum(g.search_hi)},
                    {"count", g.count()},
                    {"roots", roots}});
  }
  json roots = json::array();
  for (const auto& r : rep.roots()) roots.push_back(root_json(r));
  return {{"scaling", to_string(rep.scaling)}, {"qbar", rep.qbar},  {"total", rep.total()},
          {"roots", roots},                    {"gaps", gaps},      {"support", support_json(rep.support, rep.scaling)},
          {"diagnostics", rep.diagnostics}};
}

OutlierReport outliers_for(const Scenario& s, const Task& task, const SummaryMatrix& G) {
  return find_outliers(task, G, s.solver.scaling, s.solver.expect, s.solver.outliers, s.solver.bulk);
}

// ---- predict-bulk

void cmd_predict_bulk(const Context& cx) {
  const Scenario& s = cx.s;
  const SummaryMatrix G = initial_summary(s);
  const ProfileLaw law = ProfileLaw::from_summary(s.task, G, s.solver.expect);
  const StieltjesSolver solver(law, s.solver.scaling, s.solver.bulk);
  const SupportSet& sup = solver.support();
  const double w = std::max(sup.width(), 1e-12);
  const double lo = sup.lower() - 0.05 * w, hi = sup.upper() + 0.05 * w;
  const int m = s.solver.density_points;
  std::vector<double> grid(m);
  for (int i = 0; i < m; ++i) grid[i] = lo + (hi - lo) * (i + 0.5) / m;
  const double eta = s.solver.density_eta.value_or(solver.default_eta());
  const std::vector<double> dens = solver.density(grid, eta);
  std::string csv = "x,density\n";
  for (int i = 0; i < m; ++i) csv += num(grid[i]) + "," + num(dens[i]) + "\n";

  double max_res = 0.0;
  for (int i = 0; i < m; i += std::max(1, m / 50)) {
    const cplx z(grid[i], eta);
    max_res = std::max(max_res, solver.residual(z, solver.S(z)));
  }
  json diag = {{"scaling", to_string(s.solver.scaling)},
               {"kappa", jnum(solver.kappa())},
               {"atoms", solver.atoms().size()},
               {"eta", jnum(eta)},
               {"max_residual", jnum(max_res)},
               {"qbar", G.qbar},
               {"warnings", sup.warnings}};
  Bundle b(cx.out, "predict-bulk", cx.hash);
  b.add("density.csv", csv);
  b.add_json("support.json", support_json(sup, s.solver.scaling));
  b.add_json("diagnostics.json", diag);
  b.commit();
}

// ---- predict-outliers

void cmd_predict_outliers(const Context& cx) {
  const Scenario& s = cx.s;
  const SummaryMatrix G = initial_summary(s);
  const OutlierReport rep = outliers_for(s, s.task, G);
  std::string csv = "z,multiplicity,S\n";
  for (const auto& r : rep.roots()) csv += num(r.z) + "," + std::to_string(r.multiplicity) + "," + num(r.S) + "\n";
  Bundle b(cx.out, "predict-outliers", cx.hash);
  b.add_json("roots.json", report_json(rep));
  b.add("markers.csv", csv);
  b.commit();
}

// ---- dynamics

std::string trajectory_csv(const Trajectory& tr) {
  std::string csv = "t";
  if (tr.G.empty()) return csv + "\n";
  const int q = tr.G.front().q();
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) csv += ",G_" + std::to_string(i) + "_" + std::to_string(j);
  csv += "\n";
  for (size_t n = 0; n < tr.t.size(); ++n) {
    csv += num(tr.t[n]);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) csv += "," + num(tr.G[n].G(i, j));
    csv += "\n";
  }
  return csv;
}

Trajectory read_trajectory(const std::string& path, const Task& task) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open replay file " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t", 0) != 0) throw InputError(path + ":1: missing header");
  const int q = task.q();
  Trajectory tr;
  int ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InputError(path + ":" + std::to_string(ln) + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(v.size()) != 1 + q * q)
      throw InputError(path + ":" + std::to_string(ln) + ": expected " + std::to_string(1 + q * q) + " columns");
    Mat G(q, q);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) G(i, j) = v[1 + i * q + j];
    tr.t.push_back(v[0]);
    tr.G.push_back(SummaryMatrix::from_gram(G, task.param_count(), task.k));
  }
  if (tr.t.empty()) throw InputError(path + ": no checkpoints");
  return tr;
}

void cmd_dynamics(const Context& cx) {
  const Scenario& s = cx.s;
  Trajectory tr = cx.replay.empty() ? integrate(initial_summary(s), s.task, s.dynamics, s.solver.expect)
                                    : read_trajectory(cx.replay, s.task);
  const auto flow = spectral_flow(tr, s.task, s.solver.scaling, s.solver.expect, s.solver.outliers);
  json spectra = json::array();
  std::string flow_csv = "t,id,z,multiplicity\n", edge_csv = "t,interval,lo,hi\n";
  for (const auto& snap : flow) {
    json roots = json::array();
    for (size_t i = 0; i < snap.roots.size(); ++i) {
      roots.push_back({{"ids", snap.ids[i]}, {"z", jnum(snap.roots[i].z)}, {"multiplicity", snap.roots[i].multiplicity}});
      for (int id : snap.ids[i])
        flow_csv += num(snap.t) + "," + std::to_string(id) + "," + num(snap.roots[i].z) + "," +
                    std::to_string(snap.roots[i].multiplicity) + "\n";
    }
    for (size_t i = 0; i < snap.support.intervals.size(); ++i)
      edge_csv += num(snap.t) + "," + std::to_string(i) + "," + num(snap.support.intervals[i].first) + "," +
                  num(snap.support.intervals[i].second) + "\n";
    spectra.push_back({{"t", jnum(snap.t)},
                       {"support", support_json(snap.support, s.solver.scaling)},
                       {"roots", roots},
                       {"diagnostics", snap.diagnostics}});
  }
  json meta = {{"replayed", !cx.replay.empty()},
               {"checkpoints", tr.t.size()},
               {"halving_error", jnum(tr.halving_error)},
               {"max_projection", jnum(tr.max_projection)}};
  Bundle b(cx.out, "dynamics", cx.hash);
  b.add("trajectory.csv", trajectory_csv(tr));
  b.add_json("spectra.json", {{"run", meta}, {"snapshots", spectra}});
  b.add("flow.csv", flow_csv);
  b.add("edges.csv", edge_csv);
  b.commit();
}

// ---- empirical

struct Snapshot {
  std::uint64_t seed = 0;
  double t = 0.0;
  long step = 0;
  SummaryMatrix G;
  Vec values;
  Vec vector_values;
  Mat U;     // q x m, L^T v
  Mat proj;  // k x m
  double max_residual = 0.0;
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Snapshot> run_replica(const Scenario& s, const Task& task, std::uint64_t seed) {
  const auto& ec = s.empirical;
  EmpiricalInstance inst = make_instance(task, ec.d, seed, ec.mode);
  if (s.init.kind == InitKind::Gaussian) gaussian_parameters(inst, mix(seed, 1));
  if (s.init.kind == InitKind::Explicit) realize_summary(inst, initial_summary(s), mix(seed, 2));
  std::vector<double> times = ec.times;
  std::sort(times.begin(), times.end());
  const double c_eta = s.dynamics.c_eta;
  if (times.back() > 0 && !(c_eta > 0)) throw InputError("empirical: times > 0 need dynamics.c_eta > 0");
  std::vector<Snapshot> out;
  long done = 0;
  for (size_t ti = 0; ti < times.size(); ++ti) {
    const long target = c_eta > 0 ? std::lround(times[ti] * inst.n / c_eta) : 0;
    if (target > done) {
      run_sgd(inst, target - done, c_eta, s.dynamics.beta, mix(seed, 100 + ti), target - done);
      done = target;
    }
    Snapshot sn;
    sn.seed = seed;
    sn.step = done;
    sn.t = c_eta > 0 ? done * c_eta / inst.n : 0.0;
    sn.G = compute_G(inst.x, inst.means);
    const Batch batch = ec.mode == DataMode::Train ? inst.train
                                                   : sample_batch(task, inst.means, inst.n, mix(seed, 200 + ti));
    const Mat M = assemble_profile_block(task, inst.x, inst.means, batch);
    const Prediction p = predict(task, sn.G, s.solver.density_points, s.solver.expect, s.solver.outliers, s.solver.bulk);
    const double w = p.bulk_upper - p.bulk_lower;
    const double eps = std::max(0.02 * w, 2.0 * std::pow(static_cast<double>(ec.d), -1.0 / 3.0) * w);
    double margin = eps;
    const auto right = p.outliers.right_roots();
    if (!right.empty()) margin = std::min(eps, 0.5 * (right.front().z - p.bulk_upper));
    const EigenResult e = eigensolve(M, p.bulk_upper + margin);
    sn.values = e.values;
    sn.vector_values = e.vector_values;
    sn.max_residual = e.max_residual;
    const ReducedBasis rb = build_L(inst.x, inst.means);
    sn.U = rb.L.transpose() * e.vectors;
    sn.proj.resize(task.k, e.vectors.cols());
    for (int j = 0; j < task.k; ++j) sn.proj.row(j) = inst.means.col(j).transpose() * e.vectors / inst.means.col(j).norm();
    out.push_back(std::move(sn));
  }
  return out;
}

std::vector<Snapshot> run_replicas(const Scenario& s, const Task& task, int threads) {
  const auto& seeds = s.empirical.seeds;
  std::vector<std::vector<Snapshot>> res(seeds.size());
  std::vector<std::exception_ptr> errs(seeds.size());
  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(seeds.size())));
  set_blas_threads(nt > 1 ? 1 : threads);
  auto work = [&](int w) {
    for (size_t i = w; i < seeds.size(); i += nt) {
      try {
        res[i] = run_replica(s, task, seeds[i]);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < nt; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  std::vector<Snapshot> all;
  for (auto& r : res)
    for (auto& sn : r) all.push_back(std::move(sn));
  return all;
}

struct Histogram {
  double lo = 0, hi = 0;
  std::vector<int> counts;
};

Histogram histogram(const Vec& v, int bins) {
  Histogram h;
  h.lo = v.minCoeff();
  h.hi = v.maxCoeff();
  if (!(h.hi > h.lo)) h.hi = h.lo + 1.0;
  h.counts.assign(bins, 0);
  const double dx = (h.hi - h.lo) / bins;
  for (Eigen::Index i = 0; i < v.size(); ++i) ++h.counts[std::min(bins - 1, static_cast<int>((v(i) - h.lo) / dx))];
  return h;
}

void cmd_empirical(const Context& cx) {
  const Scenario& s = cx.s;
  const auto snaps = run_replicas(s, s.task, cx.threads);
  std::string eig_csv = "seed,t,index,value\n", hist_csv = "seed,t,bin,lo,hi,count,density\n";
  json runs = json::array();
  for (const auto& sn : snaps) {
    const std::string pre = std::to_string(sn.seed) + "," + num(sn.t) + ",";
    for (Eigen::Index i = 0; i < sn.values.size(); ++i) eig_csv += pre + std::to_string(i) + "," + num(sn.values(i)) + "\n";
    const Histogram h = histogram(sn.values, s.empirical.bins);
    const double dx = (h.hi - h.lo) / s.empirical.bins;
    for (int bi = 0; bi < s.empirical.bins; ++bi)
      hist_csv += pre + std::to_string(bi) + "," + num(h.lo + bi * dx) + "," + num(h.lo + (bi + 1) * dx) + "," +
                  std::to_string(h.counts[bi]) + "," + num(h.counts[bi] / (sn.values.size() * dx)) + "\n";
    json vecs = json::array();
    for (Eigen::Index c = 0; c < sn.vector_values.size(); ++c)
      vecs.push_back({{"z", jnum(sn.vector_values(c))}, {"u", vec_json(sn.U.col(c))}, {"mean_projections", vec_json(sn.proj.col(c))}});
    runs.push_back({{"seed", sn.seed},
                    {"t", jnum(sn.t)},
                    {"step", sn.step},
                    {"G", mat_json(sn.G.G)},
                    {"max_residual", jnum(sn.max_residual)},
                    {"vectors", vecs}});
  }
  const int n = static_cast<int>(std::lround(s.task.phi * s.empirical.d));
  Bundle b(cx.out, "empirical", cx.hash);
  b.add("eigenvalues.csv", eig_csv);
  b.add("histogram.csv", hist_csv);
  b.add_json("empirical.json", {{"d", s.empirical.d}, {"n", n}, {"data_mode", to_string(s.empirical.mode)}, {"runs", runs}});
  b.commit();
}

// ---- compare

json load_input(const fs::path& dir, const std::string& name, const std::string& producer, const std::string& hash) {
  const fs::path p = dir / name, m = dir / (name + ".meta.json");
  if (!fs::exists(p) || !fs::exists(m))
    throw InputError("compare: missing input " + p.string() + " (run '" + producer + "' first)");
  std::ifstream mf(m);
  const json meta = json::parse(mf, nullptr, false);
  if (meta.is_discarded() || meta.value("config_sha256", "") != hash)
    throw InputError("compare: " + p.string() + " was produced from a different config (rerun '" + producer + "')");
  if (name.size() > 5 && name.substr(name.size() - 5) == ".json") {
    std::ifstream f(p);
    const json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw InputError("compare: cannot parse " + p.string());
    return j;
  }
  return json();
}

void cmd_compare(const Context& cx) {
  const Scenario& s = cx.s;
  const json roots = load_input(cx.inputs, "roots.json", "predict-outliers", cx.hash);
  load_input(cx.inputs, "support.json", "predict-bulk", cx.hash);
  const json emp = load_input(cx.inputs, "empirical.json", "empirical", cx.hash);
  load_input(cx.inputs, "eigenvalues.csv", "empirical", cx.hash);

  // eigenvalues by (seed, t)
  std::map<std::pair<std::uint64_t, std::string>, std::vector<double>> eigs;
  {
    std::ifstream in(cx.inputs / "eigenvalues.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string seed, t, idx, val;
      std::getline(ss, seed, ',');
      std::getline(ss, t, ',');
      std::getline(ss, idx, ',');
      std::getline(ss, val, ',');
      eigs[{std::stoull(seed), t}].push_back(std::stod(val));
    }
  }
  std::vector<double> predicted_t0;
  for (const auto& r : roots["roots"])
    for (int c = 0; c < r["multiplicity"].get<int>(); ++c) predicted_t0.push_back(from_jnum(r["z"]));

  const int d = emp["d"].get<int>();
  json runs = json::array();
  std::vector<double> ks_all, err_all;
  int count_ok = 0, nruns = 0;
  double root_drift = 0.0;
  for (const auto& run : emp["runs"]) {
    const std::uint64_t seed = run["seed"].get<std::uint64_t>();
    const double t = from_jnum(run["t"]);
    auto it = eigs.find({seed, num(t)});
    if (it == eigs.end()) throw InputError("compare: eigenvalues.csv has no rows for seed " + std::to_string(seed));
    const Vec values = Eigen::Map<const Vec>(it->second.data(), it->second.size());
    const SummaryMatrix G = SummaryMatrix::from_gram(mat_from_json(run["G"]), s.task.param_count(), s.task.k);
    const Prediction p = predict(s.task, G, s.solver.density_points, s.solver.expect, s.solver.outliers, s.solver.bulk);
    const auto& vj = run["vectors"];
    Vec vz(vj.size());
    Mat U(s.task.q(), vj.size()), P(s.task.k, vj.size());
    for (size_t c = 0; c < vj.size(); ++c) {
      vz(c) = from_jnum(vj[c]["z"]);
      for (int i = 0; i < s.task.q(); ++i) U(i, c) = from_jnum(vj[c]["u"][i]);
      for (int i = 0; i < s.task.k; ++i) P(i, c) = from_jnum(vj[c]["mean_projections"][i]);
    }
    const SpectrumComparison cmp = compare_projected(values, vz, U, P, p, d);
    if (t == 0.0 && s.solver.scaling == Scaling::Data) {
      std::vector<double> now;
      for (const auto& r : p.outliers.roots())
        for (int c = 0; c < r.multiplicity; ++c) now.push_back(r.z);
      if (now.size() != predicted_t0.size()) root_drift = INFINITY;
      else
        for (size_t i = 0; i < now.size(); ++i) root_drift = std::max(root_drift, std::abs(now[i] - predicted_t0[i]));
    }
    json counts = json::array(), outs = json::array(), vecs = json::array();
    for (const auto& c : cmp.counts)
      counts.push_back({{"lo", jnum(c.lo)}, {"hi", jnum(c.hi)}, {"predicted", c.predicted}, {"empirical", c.empirical}});
    for (const auto& o : cmp.outliers) {
      outs.push_back({{"predicted", jnum(o.predicted)}, {"empirical", jnum(o.empirical)}, {"error", jnum(o.error)}});
      err_all.push_back(o.error);
    }
    for (const auto& v : cmp.vectors)
      vecs.push_back({{"z", jnum(v.z)},
                      {"residual", jnum(v.residual)},
                      {"norm_residual", jnum(v.norm_residual)},
                      {"mean_projections", vec_json(v.mean_projections)}});
    runs.push_back({{"seed", seed},
                    {"t", jnum(t)},
                    {"ks", jnum(cmp.ks)},
                    {"bl", jnum(cmp.bl)},
                    {"counts_match", cmp.counts_match()},
                    {"counts", counts},
                    {"outliers", outs},
                    {"vectors", vecs}});
    ks_all.push_back(cmp.ks);
    count_ok += cmp.counts_match();
    ++nruns;
  }
  auto median = [](std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  json summary = {{"runs", nruns},
                  {"median_ks", jnum(median(ks_all))},
                  {"median_outlier_error", jnum(median(err_all))},
                  {"count_matches", count_ok},
                  {"t0_root_consistency", jnum(root_drift)}};
  Bundle b(cx.out, "compare", cx.hash);
  b.add_json("comparison.json", {{"summary", summary}, {"runs", runs}});
  b.commit();
}

// ---- figure

void cmd_figure(const Context& cx) {
  const Scenario& s = cx.s;
  const FigureConfig& fc = s.figure;
  if (fc.name.empty()) throw InputError("figure: the config has no 'figure' block");
  const ProfileKind pk = s.task.profile.kind;
  const bool grad = pk == ProfileKind::LogisticGradient || pk == ProfileKind::TwoLayerGradient ||
                    pk == ProfileKind::MultiIndexGradient;
  const bool two_layer = pk == ProfileKind::TwoLayerHessian || pk == ProfileKind::TwoLayerGradient;
  if ((fc.name == "gradient-lambda" || fc.name == "gradient-training") && !grad)
    throw InputError("figure " + fc.name + ": task.profile.kind must be a gradient profile");
  if (fc.name == "hessian-training" && grad) throw InputError("figure hessian-training: task.profile.kind must be a Hessian profile");
  if (fc.name == "two-layer-xor" && !two_layer) throw InputError("figure two-layer-xor: task needs a two-layer profile");

  struct Spec {
    std::string label;
    Scenario sc;
  };
  std::vector<Spec> specs;
  Scenario base = s;
  base.empirical.seeds = {s.empirical.seeds.front()};
  if (fc.name == "gradient-lambda") {
    if (fc.lambdas.empty()) throw InputError("figure gradient-lambda: figure.lambdas is empty");
    for (double lam : fc.lambdas) {
      Scenario sc = base;
      sc.task.lambda = lam;
      sc.empirical.times = {0.0};
      specs.push_back({"lambda=" + num(lam), sc});
    }
  } else if (fc.name == "static") {
    Scenario sc = base;
    sc.empirical.times = {0.0};
    specs.push_back({"static", sc});
  } else {
    for (DataMode m : fc.modes) {
      Scenario sc = base;
      sc.empirical.mode = m;
      specs.push_back({to_string(m), sc});
    }
  }

  std::string hist = "snapshot,label,t,lo,hi,count,density\n", pred = "snapshot,label,t,x,density\n",
              marks = "snapshot,label,t,kind,z,multiplicity\n";
  json index = json::array();
  int sid = 0;
  for (const auto& sp : specs) {
    const auto snaps = run_replicas(sp.sc, sp.sc.task, cx.threads);
    for (const auto& sn : snaps) {
      const std::string pre = std::to_string(sid) + "," + sp.label + "," + num(sn.t) + ",";
      const Histogram h = histogram(sn.values, sp.sc.empirical.bins);
      const double dx = (h.hi - h.lo) / sp.sc.empirical.bins;
      for (int bi = 0; bi < sp.sc.empirical.bins; ++bi)
        hist += pre + num(h.lo + bi * dx) + "," + num(h.lo + (bi + 1) * dx) + "," + std::to_string(h.counts[bi]) + "," +
                num(h.counts[bi] / (sn.values.size() * dx)) + "\n";
      const Prediction p =
          predict(sp.sc.task, sn.G, s.solver.density_points, s.solver.expect, s.solver.outliers, s.solver.bulk);
      for (size_t i = 0; i < p.density_x.size(); ++i) pred += pre + num(p.density_x[i]) + "," + num(p.density_y[i]) + "\n";
      int distinct_right = 0;
      for (const auto& r : p.outliers.roots()) {
        marks += pre + "predicted," + num(r.z) + "," + std::to_string(r.multiplicity) + "\n";
        distinct_right += r.z > p.bulk_upper;
      }
      for (Eigen::Index c = 0; c < sn.vector_values.size(); ++c) marks += pre + "empirical," + num(sn.vector_values(c)) + ",1\n";
      index.push_back({{"snapshot", sid},
                       {"label", sp.label},
                       {"t", jnum(sn.t)},
                       {"lambda", jnum(sp.sc.task.lambda)},
                       {"data_mode", to_string(sp.sc.empirical.mode)},
                       {"seed", sn.seed},
                       {"ks", jnum(ks_distance(sn.values, p))},
                       {"bulk", {jnum(p.bulk_lower), jnum(p.bulk_upper)}},
                       {"distinct_right_outliers", distinct_right}});
      ++sid;
    }
  }
  Bundle b(cx.out, "figure", cx.hash);
  b.add("histogram.csv", hist);
  b.add("predicted_density.csv", pred);
  b.add("markers.csv", marks);
  b.add_json("index.json", {{"figure", fc.name}, {"snapshots", index}});
  b.commit();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Effective spectra of Hessian and gradient matrices"};
  app.set_version_flag("--version", EFFSPEC_VERSION);
  std::string config, out, replay, inputs;
  int threads = 1;
  std::int64_t seed_override = -1;
  app.add_option("--config", config, "scenario JSON file")->required();
  app.add_option("--out", out, "output directory (overrides the config's 'output')");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed-override", seed_override, "replace empirical.seeds by this single seed")
      ->check(CLI::NonNegativeNumber);
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"predict-bulk", "bulk density and support"},
      {"predict-outliers", "outlier locations and eigenvectors"},
      {"dynamics", "effective dynamics and spectra along it"},
      {"empirical", "finite-d spectra"},
      {"compare", "finite-d spectra against predictions"},
      {"figure", "figure data bundle"}};
  std::map<std::string, CLI::App*> sub;
  for (const auto& [name, desc] : cmds) {
    sub[name] = app.add_subcommand(name, desc);
    sub[name]->fallthrough();
  }
  sub["dynamics"]->add_option("--replay", replay, "trajectory.csv to recompute spectra from");
  sub["compare"]->add_option("--inputs", inputs, "directory with predict/empirical outputs (default: --out)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  std::string command;
  for (const auto& [name, s] : sub)
    if (s->parsed()) command = name;

  Context cx;
  try {
    cx.s = load_scenario(config);
    if (seed_override >= 0) cx.s.empirical.seeds = {static_cast<std::uint64_t>(seed_override)};
    if (!out.empty()) cx.s.output = out;
    if (cx.s.output.empty()) throw ConfigError(config + ":0: output: no output directory (set 'output' or --out)", "output", 0);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
  cx.out = cx.s.output;
  // the output location does not change results, so it is left out of the hash
  Scenario hashed = cx.s;
  hashed.output.clear();
  cx.hash = sha256_hex(canonical_json(hashed));
  cx.inputs = inputs.empty() ? cx.out : fs::path(inputs);
  cx.replay = replay;
  cx.threads = threads;
  try {
    if (command == "predict-bulk") cmd_predict_bulk(cx);
    else if (command == "predict-outliers") cmd_predict_outliers(cx);
    else if (command == "dynamics") cmd_dynamics(cx);
    else if (command == "empirical") cmd_empirical(cx);
    else if (command == "compare") cmd_compare(cx);
    else if (command == "figure") cmd_figure(cx);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace effspec
