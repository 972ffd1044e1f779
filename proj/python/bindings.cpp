#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "univid/dataio.hpp"
#include "univid/error.hpp"
#include "univid/eval.hpp"
#include "univid/pyramid.hpp"
#include "univid/sampling.hpp"
#include "univid/training.hpp"

namespace py = pybind11;
using namespace univid;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy_n(t.data(), t.numel(), out.mutable_data());
  return out;
}

// Trained model plus everything needed to sample from it.
class Generator {
 public:
  explicit Generator(const std::string& checkpoint) : run_(load_training_checkpoint(checkpoint)) {}

  FloatArray generate(const std::string& mode, const std::string& prompt, const std::optional<FloatArray>& image,
                      std::optional<float> lambda_t, std::optional<float> lambda_v, int steps, float scale,
                      uint64_t seed) const {
    GenerateRequest r;
    r.mode = parse_mode(mode);
    auto [lt, lv] = default_lambdas(r.mode);
    r.lambda_t = lambda_t.value_or(lt);
    r.lambda_v = lambda_v.value_or(lv);
    if (!prompt.empty()) r.prompt = run_.vocab.encode(prompt);
    if (image) r.image = to_tensor(*image);
    r.steps = steps;
    r.scale = scale;
    r.seed = seed;
    r.frames = run_.geometry.frames;
    Tensor v;
    {
      py::gil_scoped_release release;
      v = univid::generate(*run_.model, run_.config.schedule(), run_.config.codec, r);
    }
    return to_array(v);
  }

  int frames() const { return run_.geometry.frames; }
  int timesteps() const { return run_.config.timesteps; }
  std::vector<std::string> vocabulary() const { return run_.vocab.tokens(); }

 private:
  LoadedRun run_;
};

}  // namespace

PYBIND11_MODULE(_univid, m) {
  m.doc() = "Native core of univid";

  const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<RangeError>(m, "RangeError", base);
  py::register_exception<DivisibilityError>(m, "DivisibilityError", base);
  py::register_exception<FormatError>(m, "FormatError", base);

  m.def(
      "alpha_bar",
      [](int T, double beta_min, double beta_max) { return make_schedule(T, beta_min, beta_max).alpha_bar; },
      py::arg("timesteps"), py::arg("beta_min"), py::arg("beta_max"), "Cumulative alpha table, index 0 = clean.");
  m.def(
      "q_sample",
      [](const FloatArray& z0, int t, const FloatArray& eps, int T, double beta_min, double beta_max) {
        return to_array(q_sample(to_tensor(z0), t, to_tensor(eps), make_schedule(T, beta_min, beta_max)));
      },
      py::arg("z0"), py::arg("t"), py::arg("eps"), py::arg("timesteps") = 1000, py::arg("beta_min") = 1e-4,
      py::arg("beta_max") = 0.02);

  m.def(
      "reference_frames",
      [](int frames, int step) { return build_reference_set(frames, step, ReferenceMode::kInferMid).frames; },
      py::arg("frames"), py::arg("step"), "1-based inference reference frames.");
  m.def(
      "pyramid_table",
      [] {
        const PyramidSchedule table = PyramidSchedule::default_table();
        std::map<int, std::pair<int, int>> out;
        for (const auto& [f, l] : table.entries()) out[f] = {l.step, l.kernel};
        return out;
      },
      "factor -> (step, kernel)");

  m.def(
      "gen_clip",
      [](const std::string& shape, const std::string& color, const std::string& motion, const std::string& speed,
         int frames, int height, int width, uint64_t seed) {
        ClipSpec s;
        s.shape = parse_shape(shape);
        s.color = color;
        s.motion = parse_motion(motion);
        s.speed = parse_speed(speed);
        s.frames = frames;
        s.height = height;
        s.width = width;
        const Clip c = univid::gen_clip(s, seed);
        return py::make_tuple(to_array(c.video), c.caption);
      },
      py::arg("shape") = "circle", py::arg("color") = "red", py::arg("motion") = "right", py::arg("speed") = "slow",
      py::arg("frames") = 8, py::arg("height") = 32, py::arg("width") = 32, py::arg("seed") = 0,
      "Returns (video [F, 3, H, W], caption words).");

  m.def(
      "encode_tensor",
      [](const FloatArray& a) {
        const auto bytes = univid::encode_tensor(to_tensor(a));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("array"));
  m.def(
      "decode_tensor",
      [](const py::bytes& b) {
        const std::string s = b;
        return to_array(univid::decode_tensor(std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size())));
      },
      py::arg("data"));

  m.def(
      "psnr", [](const FloatArray& a, const FloatArray& b) { return univid::psnr(to_tensor(a), to_tensor(b)).mean; },
      py::arg("a"), py::arg("b"), "Mean per-frame PSNR in dB for [0, 1] data.");
  m.def(
      "first_frame_fidelity",
      [](const FloatArray& v, const FloatArray& ref) { return univid::first_frame_fidelity(to_tensor(v), to_tensor(ref)); },
      py::arg("video"), py::arg("reference"));
  m.def(
      "temporal_smoothness", [](const FloatArray& v) { return univid::temporal_smoothness(to_tensor(v)); },
      py::arg("video"));

  py::class_<Generator>(m, "Generator")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("generate", &Generator::generate, py::arg("mode") = "t2v", py::arg("prompt") = "",
           py::arg("image") = py::none(), py::arg("lambda_t") = py::none(), py::arg("lambda_v") = py::none(),
           py::arg("steps") = 50, py::arg("scale") = 1.0f, py::arg("seed") = 0)
      .def_property_readonly("frames", &Generator::frames)
      .def_property_readonly("timesteps", &Generator::timesteps)
      .def_property_readonly("vocabulary", &Generator::vocabulary);
}
