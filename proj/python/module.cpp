// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nbv/benchmark.hpp"
#include "nbv/environment.hpp"
#include "nbv/mesh_io.hpp"
#include "nbv/metrics.hpp"
#include "nbv/policies.hpp"
#include "nbv/protocol.hpp"
#include "nbv/scenes.hpp"

namespace py = pybind11;
using Json = nlohmann::json;

namespace {

std::vector<nbv::Vec3> points_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw nbv::InvariantError("expected an (N, 3) array");
  std::vector<nbv::Vec3> out(static_cast<std::size_t>(a.shape(0)));
  const auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
  return out;
}

py::array_t<double> points_to(const std::vector<nbv::Vec3>& pts) {
  py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = pts[i][k];
  }
  return a;
}

nbv::RunConfig config_from(const std::string& text) {
  return text.empty() ? nbv::RunConfig{} : nbv::parse_run_config(Json::parse(text), "<python>");
}

nbv::Pose5D pose_from(const std::vector<double>& v) {
  if (v.size() != 5) throw nbv::InvariantError("pose needs 5 components (x, y, z, pitch, yaw)");
  return {v[0], v[1], v[2], v[3], v[4]};
}

std::vector<double> pose_to(const nbv::Pose5D& p) { return {p.x, p.y, p.z, p.pitch, p.yaw}; }

// Environment bound to one scene; observations use the wire encoding.
class PyEnv {
 public:
  PyEnv(const std::string& config_json, std::shared_ptr<const nbv::Scene> scene) {
    auto cfg = config_from(config_json).env;
    cfg.grid = cfg.grid.on_lattice_of(scene->grid);
    env_ = std::make_unique<nbv::Environment>(cfg, std::move(scene));
  }

  std::string reset(std::optional<std::vector<double>> start) {
    std::optional<nbv::Pose5D> p;
    if (start) p = pose_from(*start);
    return obs(env_->reset(p));
  }

  py::tuple step(const std::vector<double>& action) {
    const auto out = env_->step(pose_from(action));
    py::dict info;
    info["cr"] = out.cr_after;
    info["cr_before"] = out.cr_before;
    info["collision"] = out.collision;
    info["clamped"] = out.clamped;
    info["status"] = nbv::to_string(out.reason);
    return py::make_tuple(obs(env_->state()), out.reward, out.terminated, info);
  }

  std::vector<double> coverage() const { return env_->state().coverage; }
  std::vector<std::vector<double>> poses() const {
    std::vector<std::vector<double>> out;
    for (const auto& p : env_->state().poses) out.push_back(pose_to(p));
    return out;
  }

 private:
  std::string obs(const nbv::EpisodeState& st) const {
    return nbv::observation_json(st, st.grid.config.dims, false).dump();
  }

  std::unique_ptr<nbv::Environment> env_;
};

}  // namespace

PYBIND11_MODULE(_nbvsim, m) {
  m.doc() = "Active 3D reconstruction simulator core";

  py::register_exception<nbv::InvariantError>(m, "InvariantError", PyExc_ValueError);
  py::register_exception<nbv::EpisodeError>(m, "EpisodeError", PyExc_RuntimeError);
  py::register_exception<nbv::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<nbv::FileNotFoundError>(m, "MissingFileError", PyExc_FileNotFoundError);

  py::class_<nbv::Scene, std::shared_ptr<nbv::Scene>>(m, "Scene")
      .def_property_readonly("id", [](const nbv::Scene& s) { return s.id; })
      .def_property_readonly("gt_voxel_count", [](const nbv::Scene& s) { return s.gt.voxels.size(); })
      .def_property_readonly("gt_points", [](const nbv::Scene& s) { return points_to(s.gt.surface_points); })
      .def_property_readonly("watertight", [](const nbv::Scene& s) { return nbv::is_watertight(s.mesh()); });

  m.def("load_scenes",
        [](const std::filesystem::path& manifest, const std::string& config_json) {
          const auto scenes = nbv::load_scenes(manifest, config_from(config_json));
          std::vector<std::shared_ptr<nbv::Scene>> out;
          for (const auto& s : scenes) out.push_back(std::const_pointer_cast<nbv::Scene>(s));
          return out;
        },
        py::arg("manifest"), py::arg("config_json") = "");

  m.def("generate_scene_set",
        [](int count, std::uint64_t seed, const std::filesystem::path& dir) {
          std::vector<std::string> ids;
          for (const auto& e : nbv::generate_scene_set(count, seed, dir)) ids.push_back(e.id);
          return ids;
        },
        py::arg("count"), py::arg("seed"), py::arg("dir"));

  m.def("config_json", [](const std::string& text) { return nbv::run_config_json(config_from(text)).dump(); },
        py::arg("config_json") = "", "Fully expanded config with every default filled in.");

  py::class_<PyEnv>(m, "Env")
      .def(py::init([](const std::string& config_json, std::shared_ptr<nbv::Scene> scene) {
             return std::make_unique<PyEnv>(config_json, std::move(scene));
           }),
           py::arg("config_json"), py::arg("scene"))
      .def("reset", &PyEnv::reset, py::arg("start") = py::none())
      .def("step", &PyEnv::step, py::arg("action"))
      .def_property_readonly("coverage", &PyEnv::coverage)
      .def_property_readonly("poses", &PyEnv::poses);

  m.def("mean_auc", [](const std::vector<double>& curve) { return nbv::mean_auc(curve); });
  m.def("chamfer_cm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
          return nbv::chamfer_cm(points_from(a), points_from(b));
        });

  m.def("run_benchmark",
        [](const std::filesystem::path& scenes, const std::string& policy, int views,
           std::vector<std::uint64_t> seeds, const std::filesystem::path& out,
           const std::string& config_json) {
          nbv::RunSpec spec;
          spec.scenes = scenes;
          spec.policy = policy;
          spec.views = views;
          spec.seeds = std::move(seeds);
          spec.out = out;
          spec.config = config_from(config_json);
          nbv::BenchmarkResult res;
          {
            py::gil_scoped_release release;
            res = nbv::run_benchmark(spec);
          }
          py::list rows;
          for (const auto& s : res.summaries) {
            py::dict d;
            d["policy"] = s.policy;
            d["views"] = s.views;
            d["episodes"] = s.episodes;
            d["mean_auc"] = s.mean_auc;
            d["mean_final_cr"] = s.mean_final_cr;
            d["mean_chamfer_cm"] = s.mean_chamfer_cm;
            rows.append(d);
          }
          return rows;
        },
        py::arg("scenes"), py::arg("policy"), py::arg("views"), py::arg("seeds"),
        py::arg("out") = std::filesystem::path(), py::arg("config_json") = "");

  py::class_<nbv::Server>(m, "Server")
      .def(py::init([](const std::filesystem::path& manifest, const std::string& config_json) {
             const auto rc = config_from(config_json);
             auto scenes = std::make_shared<const nbv::SceneList>(nbv::load_scenes(manifest, rc));
             return std::make_unique<nbv::Server>(rc.env, scenes);
           }),
           py::arg("manifest"), py::arg("config_json") = "")
      .def("start",
           [](nbv::Server& s, const std::string& bind) { s.start(nbv::parse_bind(bind)); },
           py::arg("bind") = "127.0.0.1:0")
      .def_property_readonly("port", &nbv::Server::port)
      .def("stop", &nbv::Server::stop, py::call_guard<py::gil_scoped_release>());

  m.attr("PROTOCOL_VERSION") = nbv::kProtocolVersion;
}
