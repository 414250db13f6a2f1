#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "epigraph/config.hpp"
#include "epigraph/epipolar.hpp"
#include "epigraph/error.hpp"
#include "epigraph/eval.hpp"
#include "epigraph/graph.hpp"
#include "epigraph/nn.hpp"
#include "epigraph/synth.hpp"

namespace py = pybind11;
using namespace epigraph;

namespace {

using PointArray = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<PointPair> to_pairs(const PointArray& x1, const PointArray& x2) {
  if (x1.rows() != x2.rows()) throw Error(ErrorCode::kShape, "x1 and x2 need the same number of rows");
  std::vector<PointPair> pairs;
  pairs.reserve(static_cast<std::size_t>(x1.rows()));
  for (Eigen::Index i = 0; i < x1.rows(); ++i) pairs.emplace_back(x1.row(i).transpose(), x2.row(i).transpose());
  return pairs;
}

Eigen::MatrixXd pixel_rows(const CorrespondenceSet& c, bool second) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(c.size()), 2);
  for (std::size_t i = 0; i < c.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = (second ? c.pairs[i].p2 : c.pairs[i].p1).transpose();
  return m;
}

Eigen::MatrixXd edge_rows(const EpipolarGraph& g) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(g.edges.size()), 3);
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) << g.edges[i].src, g.edges[i].dst, g.edges[i].weight;
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_epigraph, m) {
  m.doc() = "Epipolar graph pose regression";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      py::object inst = exc(e.what());
      inst.attr("code") = error_code_name(e.code());
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  py::class_<Quaternion>(m, "Quaternion")
      .def(py::init([](double w, double x, double y, double z) { return Quaternion{w, x, y, z}; }),
           py::arg("w") = 1.0, py::arg("x") = 0.0, py::arg("y") = 0.0, py::arg("z") = 0.0)
      .def_static("from_axis_angle", &Quaternion::from_axis_angle, py::arg("axis"), py::arg("angle"))
      .def_static("from_matrix", &rot_to_quat)
      .def_readwrite("w", &Quaternion::w)
      .def_readwrite("x", &Quaternion::x)
      .def_readwrite("y", &Quaternion::y)
      .def_readwrite("z", &Quaternion::z)
      .def("matrix", &quat_to_rot)
      .def("vec", &Quaternion::vec)
      .def("normalized", &Quaternion::normalized)
      .def("canonical", &Quaternion::canonical)
      .def("__mul__", &Quaternion::operator*)
      .def("__repr__", [](const Quaternion& q) {
        return "Quaternion(" + std::to_string(q.w) + ", " + std::to_string(q.x) + ", " + std::to_string(q.y) +
               ", " + std::to_string(q.z) + ")";
      });

  py::class_<Pose>(m, "Pose")
      .def(py::init([](const Quaternion& q, const Vec3& t) { return Pose{q, t}; }),
           py::arg("rotation") = Quaternion::identity(), py::arg("translation") = Vec3::Zero())
      .def_static("from_rt", &Pose::from_rt, py::arg("R"), py::arg("t"))
      .def_readwrite("rotation", &Pose::rotation)
      .def_readwrite("translation", &Pose::translation)
      .def("rotation_matrix", &Pose::rotation_matrix)
      .def("inverse", &Pose::inverse)
      .def("transform", &Pose::transform)
      .def("__mul__", &Pose::operator*);

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy) { return Intrinsics{fx, fy, cx, cy}; }),
           py::arg("fx") = 500.0, py::arg("fy") = 500.0, py::arg("cx") = 320.0, py::arg("cy") = 240.0)
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def("matrix", &Intrinsics::matrix);

  m.def("relative_pose", &relative_pose, py::arg("Ti"), py::arg("Tj"));
  m.def("essential_from_pose", &essential_from_pose, py::arg("pose"));
  m.def("epipolar_essential", &epipolar_essential, py::arg("relative"));
  m.def("yaw", &yaw_of, py::arg("q"));

  py::class_<CorrespondenceSet>(m, "CorrespondenceSet")
      .def_property_readonly("p1", [](const CorrespondenceSet& c) { return pixel_rows(c, false); })
      .def_property_readonly("p2", [](const CorrespondenceSet& c) { return pixel_rows(c, true); })
      .def_property_readonly("confidence",
                             [](const CorrespondenceSet& c) {
                               std::vector<double> v;
                               for (const auto& p : c.pairs) v.push_back(p.confidence);
                               return v;
                             })
      .def_readonly("intrinsics", &CorrespondenceSet::intrinsics)
      .def_readonly("gt_relative", &CorrespondenceSet::gt_relative)
      .def_property_readonly("pair_id", [](const CorrespondenceSet& c) { return c.pair_id.str(); })
      .def("__len__", &CorrespondenceSet::size)
      .def("format", &format_correspondences)
      .def_static("parse", &parse_correspondences)
      .def("save", [](const CorrespondenceSet& c, const std::filesystem::path& p) { save_correspondences(c, p); })
      .def_static("load", &load_correspondences);

  m.def(
      "generate_scene",
      [](const Pose& pose, std::uint64_t seed, int n_points, double noise_px, double outlier_fraction) {
        SceneSpec s;
        s.seed = seed;
        s.pose = pose;
        s.n_points = n_points;
        s.noise_px = noise_px;
        s.outlier_fraction = outlier_fraction;
        SyntheticScene scene = generate_scene(s);
        return py::make_tuple(std::move(scene.correspondences), std::move(scene.inlier));
      },
      py::arg("pose"), py::arg("seed") = 0, py::arg("n_points") = 100, py::arg("noise_px") = 0.0,
      py::arg("outlier_fraction") = 0.0, "Returns (CorrespondenceSet, inlier flags).");

  m.def(
      "generate_trajectory",
      [](std::uint64_t seed, int frames, const std::string& motion) {
        return generate_trajectory(seed, frames, parse_motion_model(motion)).poses;
      },
      py::arg("seed"), py::arg("frames"), py::arg("motion") = "arc");

  m.def("normalized_points", [](const CorrespondenceSet& c) {
    const auto pairs = normalized_pairs(c);
    PointArray x1(static_cast<Eigen::Index>(pairs.size()), 3), x2(static_cast<Eigen::Index>(pairs.size()), 3);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      x1.row(static_cast<Eigen::Index>(i)) = pairs[i].first.transpose();
      x2.row(static_cast<Eigen::Index>(i)) = pairs[i].second.transpose();
    }
    return py::make_tuple(x1, x2);
  });
  m.def(
      "eight_point", [](const PointArray& x1, const PointArray& x2) { return solve_eight_point(to_pairs(x1, x2)); },
      py::arg("x1"), py::arg("x2"));
  m.def(
      "classical_relative_pose",
      [](const PointArray& x1, const PointArray& x2) { return classical_relative_pose(to_pairs(x1, x2)); },
      py::arg("x1"), py::arg("x2"));
  m.def(
      "estimate_e0",
      [](const CorrespondenceSet& c, std::uint64_t seed) {
        E0Options o;
        o.seed = seed;
        return estimate_E0(c, o);
      },
      py::arg("correspondences"), py::arg("seed") = 0);
  m.def("sampson_distance", [](const Vec3& x1, const Vec3& x2, const Mat3& E) { return sampson_distance(x1, x2, E); });

  py::class_<EpipolarGraph>(m, "EpipolarGraph")
      .def_readonly("node_features", &EpipolarGraph::node_features)
      .def_property_readonly("edges", &edge_rows)
      .def_readonly("kept_indices", &EpipolarGraph::kept_indices)
      .def_property_readonly("num_nodes", &EpipolarGraph::num_nodes)
      .def_property_readonly("e0", [](const EpipolarGraph& g) { return g.meta.e0; })
      .def_property_readonly("radius", [](const EpipolarGraph& g) { return g.meta.radius; })
      .def("format", &format_graph)
      .def_static("parse", &parse_graph);

  m.def(
      "build_graph",
      [](const CorrespondenceSet& c, int k, double tau, const std::string& variant, bool symmetrize) {
        GraphOptions o;
        o.k = k;
        o.tau = tau;
        o.variant = parse_knn_variant(variant);
        o.symmetrize = symmetrize;
        return build_graph(c, o);
      },
      py::arg("correspondences"), py::arg("k") = 6, py::arg("tau") = 1e-4, py::arg("variant") = "hard",
      py::arg("symmetrize") = true);

  py::class_<nn::Model>(m, "Model")
      .def(py::init([](const std::string& preset, int hidden, std::uint64_t seed) {
             return nn::Model(nn::make_preset(preset, hidden), seed);
           }),
           py::arg("preset") = "GAT+2GCN", py::arg("hidden") = 64, py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return nn::load_checkpoint(p).model; })
      .def("save", [](const nn::Model& model, const std::filesystem::path& p) { nn::save_checkpoint(p, model); })
      .def_property_readonly("num_parameters",
                             [](const nn::Model& model) {
                               Eigen::Index n = 0;
                               for (const auto& t : model.params().tensors()) n += t.value.size();
                               return n;
                             })
      .def("predict", [](const nn::Model& model, const EpipolarGraph& g) { return model.predict(g).pose(); })
      .def("node_embeddings", &nn::Model::node_embeddings);
  m.def("presets", &nn::preset_names);

  m.def("dre", py::overload_cast<const Mat3&, const Mat3&>(&dre), py::arg("R_pred"), py::arg("R_gt"));
  m.def(
      "dte", [](const Vec3& a, const Vec3& b) { return dte(a, b); }, py::arg("t_pred"), py::arg("t_gt"));
  m.def("chain", [](const std::vector<Pose>& rel) { return chain(rel); });
  m.def("ate", &ate, py::arg("pred"), py::arg("gt"));

  m.def(
      "parse_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return format_config(parse_config(text, overrides));
      },
      py::arg("text") = "{}", py::arg("overrides") = std::vector<std::string>{},
      "Validates a JSON config with overrides and returns the fully populated JSON.");
}
