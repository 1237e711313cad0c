#pragma once

// On-disk layout of datasets and tracking runs.
//
// dataset dir:  Y.rstm L.rstm X.rstm V.rstm supports.rsts segments.csv
//               bases/P_<j>.rstm manifest.json
// estimate dir: lhat.rstm xhat.rsts xhat_values.rstv frames.csv timing.csv
//               changes.csv bases.csv bases/B_<id>.rstm manifest.json
//               [offline/ with lhat, xhat and frames.csv]

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "reprocs/datagen.hpp"
#include "reprocs/io.hpp"
#include "reprocs/metrics.hpp"
#include "reprocs/tracker.hpp"
#include "reprocs/version.hpp"

namespace reprocs::store {

namespace fs = std::filesystem;
using nlohmann::json;

inline void write_manifest(const fs::path& dir, json extra) {
  extra["library_version"] = kVersion;
  io::write_atomic(dir / "manifest.json", extra.dump(2) + "\n");
}

inline json read_manifest(const fs::path& dir) {
  try {
    return json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
}

inline std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(io::read_file(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline void write_dataset(const fs::path& dir, const Dataset& ds, std::uint64_t config_hash, bool csv = false) {
  fs::create_directories(dir / "bases");
  const GroundTruth& g = ds.truth;
  io::write_rstm(dir / "Y.rstm", ds.Y);
  io::write_rstm(dir / "L.rstm", g.L);
  io::write_rstm(dir / "X.rstm", g.X);
  io::write_rstm(dir / "V.rstm", g.V);
  io::write_rsts(dir / "supports.rsts", static_cast<std::uint64_t>(g.L.rows()), g.supports);
  std::string seg = "j,t_j,theta_j\n0,0,0\n";
  for (std::size_t j = 0; j < g.change_times.size(); ++j)
    seg += std::to_string(j + 1) + "," + std::to_string(g.change_times[j]) + "," + io::format_double(g.thetas[j]) + "\n";
  io::write_atomic(dir / "segments.csv", seg);
  for (std::size_t j = 0; j < g.bases.size(); ++j)
    io::write_rstm(dir / "bases" / ("P_" + std::to_string(j) + ".rstm"), g.bases[j].mat());
  if (csv) {
    io::write_atomic(dir / "Y.csv", io::matrix_csv(ds.Y));
    io::write_atomic(dir / "L.csv", io::matrix_csv(g.L));
    io::write_atomic(dir / "X.csv", io::matrix_csv(g.X));
  }
  write_manifest(dir, {{"kind", "dataset"},
                       {"seed", g.seed},
                       {"config_hash", io::hex64(config_hash)},
                       {"n", g.L.rows()},
                       {"T", g.L.cols()},
                       {"t_train", g.t_train},
                       {"segments", g.bases.size()}});
}

inline Dataset read_dataset(const fs::path& dir) {
  const json man = read_manifest(dir);
  if (man.value("kind", "") != "dataset") throw FormatError(dir.string() + " is not a dataset directory");
  Dataset ds;
  GroundTruth& g = ds.truth;
  ds.Y = io::read_rstm(dir / "Y.rstm");
  g.L = io::read_rstm(dir / "L.rstm");
  g.X = io::read_rstm(dir / "X.rstm");
  g.V = io::read_rstm(dir / "V.rstm");
  const Index n = ds.Y.rows(), T = ds.Y.cols();
  for (const Matrix* m : {&g.L, &g.X, &g.V})
    if (m->rows() != n || m->cols() != T) throw Misalignment(dir.string() + ": component shapes differ");
  io::SupportData sd = io::read_rsts(dir / "supports.rsts");
  if (static_cast<Index>(sd.n) != n || static_cast<Index>(sd.frames.size()) != T)
    throw Misalignment(dir.string() + ": support file shape differs");
  g.supports = std::move(sd.frames);
  for (const auto& row : read_csv(dir / "segments.csv")) {
    if (row.size() != 3) throw FormatError("segments.csv: expected 3 columns");
    const int j = std::stoi(row[0]);
    Matrix b = io::read_rstm(dir / "bases" / ("P_" + std::to_string(j) + ".rstm"));
    if (b.rows() != n) throw Misalignment("basis P_" + std::to_string(j) + " has wrong n");
    g.bases.push_back(Basis::trusted(std::move(b)));
    if (j > 0) {
      g.change_times.push_back(std::stoll(row[1]));
      g.thetas.push_back(std::stod(row[2]));
    }
  }
  g.seed = man.value("seed", std::uint64_t{0});
  g.t_train = man.value("t_train", std::int64_t{0});
  return ds;
}

namespace detail {

inline void write_frames(const fs::path& dir, Index n, const std::vector<FrameEstimate>& est) {
  Matrix lhat(n, static_cast<Index>(est.size()));
  std::vector<IndexSet> supports;
  std::vector<double> values;
  std::string frames = "t,phase,j,k,detect_flag,basis_id,flagged\n";
  for (std::size_t i = 0; i < est.size(); ++i) {
    const FrameEstimate& e = est[i];
    lhat.col(static_cast<Index>(i)) = e.l_hat;
    supports.push_back(e.support);
    for (Index s : e.support) values.push_back(e.x_hat(s));
    frames += std::to_string(e.t) + "," + phase_name(e.phase) + "," + std::to_string(e.j) + "," +
              std::to_string(e.k) + "," + (e.detect_flag ? "1" : "0") + "," + std::to_string(e.basis_id) + "," +
              (e.flagged ? "1" : "0") + "\n";
  }
  io::write_rstm(dir / "lhat.rstm", lhat);
  io::write_rsts(dir / "xhat.rsts", static_cast<std::uint64_t>(n), supports);
  io::write_atomic(dir / "xhat_values.rstv", io::encode_rstv(values));
  io::write_atomic(dir / "frames.csv", frames);
}

inline std::vector<FrameEstimate> read_frames(const fs::path& dir) {
  const Matrix lhat = io::read_rstm(dir / "lhat.rstm");
  io::SupportData sd = io::read_rsts(dir / "xhat.rsts");
  const std::vector<double> values = io::decode_rstv(io::read_file(dir / "xhat_values.rstv"),
                                                     (dir / "xhat_values.rstv").string());
  const auto rows = read_csv(dir / "frames.csv");
  const Index n = lhat.rows();
  if (static_cast<Index>(sd.n) != n || sd.frames.size() != rows.size() ||
      static_cast<std::size_t>(lhat.cols()) != rows.size())
    throw Misalignment(dir.string() + ": estimate files disagree on shape");
  std::vector<FrameEstimate> est(rows.size());
  std::size_t v = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 7) throw FormatError((dir / "frames.csv").string() + ": expected 7 columns");
    FrameEstimate& e = est[i];
    e.t = std::stoll(r[0]);
    e.phase = r[1] == "update" ? Phase::Update : Phase::Detect;
    e.j = std::stoi(r[2]);
    e.k = std::stoi(r[3]);
    e.detect_flag = r[4] == "1";
    e.basis_id = std::stoull(r[5]);
    e.flagged = r[6] == "1";
    e.l_hat = lhat.col(static_cast<Index>(i));
    e.support = std::move(sd.frames[i]);
    e.x_hat = Vector::Zero(n);
    for (Index s : e.support) {
      if (v >= values.size()) throw FormatError("xhat_values.rstv: too few values");
      e.x_hat(s) = values[v++];
    }
  }
  if (v != values.size()) throw FormatError("xhat_values.rstv: too many values");
  return est;
}

}  // namespace detail

struct RunFiles {
  std::vector<FrameEstimate> online;
  std::vector<FrameEstimate> offline;
  BasisRegistry registry;
  Index n = 0;
  bool has_offline = false;
};

inline void write_run(const fs::path& dir, Index n, const std::vector<FrameEstimate>& online,
                      const std::vector<FrameEstimate>* offline, const std::vector<BasisEvent>& events,
                      json manifest, bool write_timing = true) {
  fs::create_directories(dir / "bases");
  detail::write_frames(dir, n, online);
  std::string changes = "j,t_hat_j\n";
  int j = 0;
  for (const FrameEstimate& e : online)
    if (e.detect_flag) changes += std::to_string(++j) + "," + std::to_string(e.t) + "\n";
  io::write_atomic(dir / "changes.csv", changes);
  std::string bases = "id,t_start\n";
  for (const BasisEvent& b : events) {
    bases += std::to_string(b.id) + "," + std::to_string(b.t) + "\n";
    io::write_rstm(dir / "bases" / ("B_" + std::to_string(b.id) + ".rstm"), b.basis.mat());
  }
  io::write_atomic(dir / "bases.csv", bases);
  if (write_timing) {
    std::string timing = "t,frame_time_us\n";
    for (const FrameEstimate& e : online) timing += std::to_string(e.t) + "," + io::format_double(e.frame_time_us) + "\n";
    io::write_atomic(dir / "timing.csv", timing);
  }
  if (offline != nullptr) {
    fs::create_directories(dir / "offline");
    detail::write_frames(dir / "offline", n, *offline);
  }
  manifest["kind"] = "estimates";
  manifest["n"] = n;
  manifest["frames"] = online.size();
  manifest["offline"] = offline != nullptr;
  write_manifest(dir, manifest);
}

inline RunFiles read_run(const fs::path& dir) {
  const json man = read_manifest(dir);
  if (man.value("kind", "") != "estimates") throw FormatError(dir.string() + " is not an estimates directory");
  RunFiles rf;
  rf.n = man.value("n", Index{0});
  rf.online = detail::read_frames(dir);
  for (const auto& row : read_csv(dir / "bases.csv")) {
    if (row.size() != 2) throw FormatError("bases.csv: expected 2 columns");
    const std::uint64_t id = std::stoull(row[0]);
    rf.registry[id] = Basis::trusted(io::read_rstm(dir / "bases" / ("B_" + std::to_string(id) + ".rstm")));
  }
  if (fs::exists(dir / "timing.csv")) {
    std::map<std::int64_t, double> tm;
    for (const auto& row : read_csv(dir / "timing.csv"))
      if (row.size() == 2) tm[std::stoll(row[0])] = std::stod(row[1]);
    for (FrameEstimate& e : rf.online)
      if (auto it = tm.find(e.t); it != tm.end()) e.frame_time_us = it->second;
  }
  if (man.value("offline", false)) {
    rf.has_offline = true;
    rf.offline = detail::read_frames(dir / "offline");
  }
  return rf;
}

// Presents a dataset's ground truth as if it were a tracker's output, so a
// truth directory can be evaluated against itself.
inline RunFiles truth_as_run(const Dataset& ds) {
  const GroundTruth& g = ds.truth;
  RunFiles rf;
  rf.n = g.L.rows();
  for (std::size_t j = 0; j < g.bases.size(); ++j) rf.registry[j] = g.bases[j];
  for (Index t = g.t_train; t < g.L.cols(); ++t) {
    FrameEstimate e;
    e.t = t;
    e.x_hat = g.X.col(t);
    e.l_hat = g.L.col(t);
    e.support = g.supports[static_cast<std::size_t>(t)];
    const int seg = g.segment_of(t);
    e.j = seg + 1;
    e.basis_id = static_cast<std::uint64_t>(seg);
    rf.online.push_back(std::move(e));
  }
  return rf;
}

inline std::string frame_rows_csv(const std::vector<FrameRow>& rows, bool timing) {
  std::string out = "t,se,l_rel_err,x_abs_err,supp_precision,supp_recall,phase,j,k,detect_flag,frame_time_us\n";
  for (const FrameRow& r : rows) {
    out += std::to_string(r.t) + "," + io::format_double(r.se) + "," + io::format_double(r.l_rel_err) + "," +
           io::format_double(r.x_abs_err) + "," + io::format_double(r.supp_precision) + "," +
           io::format_double(r.supp_recall) + "," + phase_name(r.phase) + "," + std::to_string(r.j) + "," +
           std::to_string(r.k) + "," + (r.detect_flag ? "1" : "0") + "," +
           io::format_double(timing ? r.frame_time_us : 0.0) + "\n";
  }
  return out;
}

}  // namespace reprocs::store
