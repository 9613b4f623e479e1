#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmplanlab/encoder.hpp"
#include "wmplanlab/envs.hpp"
#include "wmplanlab/errors.hpp"
#include "wmplanlab/evalreport.hpp"
#include "wmplanlab/initnet.hpp"
#include "wmplanlab/tensor.hpp"
#include "wmplanlab/worldmodel.hpp"

// On-disk layout of datasets and checkpoints. Tensors are WMT1; descriptors are JSON.

namespace wmplan {

namespace fs = std::filesystem;

inline constexpr const char* kDatasetSchema = "wmplanlab-dataset/1";
inline constexpr const char* kCheckpointSchema = "wmplanlab-checkpoint/1";

// ---------------------------------------------------------------------------
// Datasets: manifest.json + traj_<i>.bin (observations [T+1, d_o], then env-unit actions [T, 2])

struct DatasetInfo {
  std::string env;
  std::size_t n_traj = 0;
  std::size_t traj_len = 0;
  std::string policy;
  std::uint64_t seed = 0;
  std::string provenance = "expert";
};

inline std::string traj_file(std::size_t i) { return "traj_" + std::to_string(i) + ".bin"; }

inline EnvSpec spec_by_name(const std::string& name) {
  if (name == "wall2d") return wall2d_spec();
  if (name == "pointmass") return point_mass_maze_spec();
  throw DatasetError("unknown environment '" + name + "'");
}

inline void save_episodes(const fs::path& dir, const EnvSpec& spec, const std::vector<Episode>& eps,
                          const DatasetInfo& info) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto& ep = eps[i];
    std::vector<double> o, a;
    for (const auto& st : ep.states) {
      const auto ob = observe(spec, st);
      o.insert(o.end(), ob.begin(), ob.end());
    }
    for (const auto& act : ep.actions) a.insert(a.end(), act.begin(), act.end());
    std::ofstream os(dir / traj_file(i), std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / traj_file(i)).string());
    write_tensor(os, Tensor({ep.states.size(), spec.obs_dim()}, std::move(o)));
    write_tensor(os, Tensor({ep.actions.size(), 2}, std::move(a)));
  }
  const json m = {{"schema", kDatasetSchema},    {"env", env_kind_name(spec.kind)}, {"n_traj", eps.size()},
                  {"traj_len", info.traj_len},   {"policy", info.policy},           {"seed", info.seed},
                  {"provenance", info.provenance}, {"obs_dim", spec.obs_dim()},     {"a_max", spec.a_max}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

inline DatasetInfo read_dataset_info(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) throw DatasetError("dataset not found: " + dir.string());
  const auto m = json::parse(read_text(dir / "manifest.json"));
  if (m.value("schema", "") != kDatasetSchema) throw DatasetError("unsupported dataset schema in " + dir.string());
  return {m.at("env"), m.at("n_traj"), m.at("traj_len"), m.at("policy"), m.at("seed"), m.at("provenance")};
}

/// Episodes of a dataset directory; `spec` must match the recorded environment.
inline std::vector<Episode> load_episodes(const fs::path& dir, const EnvSpec& spec) {
  const auto info = read_dataset_info(dir);
  if (info.env != env_kind_name(spec.kind))
    throw ConfigError("dataset " + dir.string() + " was generated for '" + info.env + "', not '" +
                      env_kind_name(spec.kind) + "'");
  std::vector<Episode> eps(info.n_traj);
  for (std::size_t i = 0; i < info.n_traj; ++i) {
    std::ifstream is(dir / traj_file(i), std::ios::binary);
    if (!is) throw DatasetError("missing trajectory file " + (dir / traj_file(i)).string());
    const Tensor o = read_tensor(is), a = read_tensor(is);
    if (o.rank() != 2 || o.cols() != spec.obs_dim() || a.rank() != 2 || a.cols() != 2 || o.rows() != a.rows() + 1)
      throw DatasetError("malformed trajectory file " + (dir / traj_file(i)).string());
    for (std::size_t t = 0; t < o.rows(); ++t) eps[i].states.push_back(state_from_obs(spec, o.row_vec(t)));
    for (std::size_t t = 0; t < a.rows(); ++t) eps[i].actions.push_back({a.at(t, 0), a.at(t, 1)});
  }
  return eps;
}

/// FNV-1a over every regular file (sorted by name) of a directory.
inline std::uint64_t hash_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("dir", 3);
  for (const auto& f : files) {
    const auto name = f.filename().string();
    h = fnv1a(name.data(), name.size(), h);
    const auto body = read_text(f);
    h = fnv1a(body.data(), body.size(), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/checkpoint.json + <dir>/params.bin

namespace detail {

inline void write_params(const fs::path& path, const std::vector<Tensor>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& p : params) write_tensor(os, p);
}

inline std::vector<Tensor> read_params(const fs::path& path, std::size_t n) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("missing parameter file " + path.string());
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(read_tensor(is));
  return out;
}

inline json read_checkpoint_json(const fs::path& dir, const std::string& kind) {
  if (!fs::exists(dir / "checkpoint.json")) throw DatasetError("checkpoint not found: " + dir.string());
  const auto j = json::parse(read_text(dir / "checkpoint.json"));
  if (j.at("schema") != kCheckpointSchema || j.at("kind") != kind)
    throw DatasetError("checkpoint " + dir.string() + " is not a " + kind);
  return j;
}

}  // namespace detail

inline void save_world_model(const fs::path& dir, const WorldModel& f, std::uint64_t encoder_hash) {
  fs::create_directories(dir);
  detail::write_params(dir / "params.bin", f.net.params);
  const json j = {{"schema", kCheckpointSchema}, {"kind", "world-model"},     {"sizes", f.net.sizes},
                  {"latent_dim", f.latent_dim},  {"action_dim", f.action_dim}, {"residual", f.residual},
                  {"encoder_hash", hex64(encoder_hash)}, {"param_hash", hex64(f.hash())}};
  write_text(dir / "checkpoint.json", j.dump(2) + "\n");
}

/// Loads and checks the recorded encoder hash against `encoder_hash`.
inline WorldModel load_world_model(const fs::path& dir, std::uint64_t encoder_hash) {
  const auto j = detail::read_checkpoint_json(dir, "world-model");
  if (j.at("encoder_hash") != hex64(encoder_hash))
    throw ConfigError("checkpoint " + dir.string() + " was trained under a different encoder");
  WorldModel f;
  f.net.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  f.latent_dim = j.at("latent_dim");
  f.action_dim = j.at("action_dim");
  f.residual = j.at("residual");
  f.net.params = detail::read_params(dir / "params.bin", 2 * (f.net.sizes.size() - 1));
  f.net.check();
  if (j.at("param_hash") != hex64(f.hash())) throw DatasetError("checkpoint " + dir.string() + " is corrupt");
  return f;
}

inline void save_initnet(const fs::path& dir, const InitNet& g, std::uint64_t encoder_hash) {
  fs::create_directories(dir);
  detail::write_params(dir / "params.bin", g.net.params);
  const json j = {{"schema", kCheckpointSchema},   {"kind", "initnet"},          {"sizes", g.net.sizes},
                  {"horizon", g.horizon},          {"latent_dim", g.latent_dim}, {"action_dim", g.action_dim},
                  {"action_bound", g.action_bound}, {"encoder_hash", hex64(encoder_hash)},
                  {"param_hash", hex64(g.net.hash())}};
  write_text(dir / "checkpoint.json", j.dump(2) + "\n");
}

inline InitNet load_initnet(const fs::path& dir, std::uint64_t encoder_hash) {
  const auto j = detail::read_checkpoint_json(dir, "initnet");
  if (j.at("encoder_hash") != hex64(encoder_hash))
    throw ConfigError("checkpoint " + dir.string() + " was trained under a different encoder");
  InitNet g;
  g.net.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  g.horizon = j.at("horizon");
  g.latent_dim = j.at("latent_dim");
  g.action_dim = j.at("action_dim");
  g.action_bound = j.at("action_bound");
  g.net.params = detail::read_params(dir / "params.bin", 2 * (g.net.sizes.size() - 1));
  g.net.check();
  if (j.at("param_hash") != hex64(g.net.hash())) throw DatasetError("checkpoint " + dir.string() + " is corrupt");
  return g;
}

}  // namespace wmplan
