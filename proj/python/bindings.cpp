#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "madv/attacks.hpp"
#include "madv/checkpoint.hpp"
#include "madv/dataset.hpp"
#include "madv/forensics.hpp"
#include "madv/gan.hpp"
#include "madv/metrics.hpp"
#include "madv/synthesis.hpp"

namespace py = pybind11;
using namespace madv;

namespace {

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> arr(t.shape());
  std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
  return arr;
}

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<std::size_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] =
      static_cast<std::size_t>(arr.shape(i));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

synthesis::NoiseStack to_noise(const std::vector<py::array_t<double>>& levels) {
  synthesis::NoiseStack stack;
  for (const auto& arr : levels) stack.levels.push_back(to_tensor(arr));
  return stack;
}

std::vector<py::array_t<double>> noise_to_list(const std::vector<Tensor>& levels) {
  std::vector<py::array_t<double>> out;
  for (const Tensor& t : levels) out.push_back(to_array(t));
  return out;
}

forensics::Arch parse_arch(const std::string& s) {
  if (s.size() == 1) return forensics::arch_from_id(s[0]);
  throw ConfigError("architecture must be 'A', 'B', or 'P'");
}

std::vector<forensics::LabeledImage> parse_corpus(
    const std::vector<py::array_t<double>>& images, const std::vector<int>& labels) {
  if (images.size() != labels.size()) throw ConfigError("images and labels length mismatch");
  std::vector<forensics::LabeledImage> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back({to_tensor(images[i]), labels[i]});
  }
  return out;
}

attacks::ManifoldStrategy parse_strategy(const std::string& s) {
  if (s == "latent") return attacks::ManifoldStrategy::kLatent;
  if (s == "noise") return attacks::ManifoldStrategy::kNoise;
  if (s == "latent+noise") return attacks::ManifoldStrategy::kLatentNoise;
  if (s == "noise-level") return attacks::ManifoldStrategy::kNoiseLevel;
  throw ConfigError("unknown strategy: " + s);
}

attacks::EnsembleMode parse_ensemble(const std::string& s) {
  if (s == "loss") return attacks::EnsembleMode::kLossSum;
  if (s == "logits") return attacks::EnsembleMode::kLogitFusion;
  if (s == "alternating") return attacks::EnsembleMode::kAlternating;
  throw ConfigError("unknown ensemble mode: " + s);
}

py::dict result_to_dict(const attacks::AttackResult& res, bool manifold) {
  py::dict d;
  d["success"] = res.success;
  d["success_step"] = res.success_step ? py::cast(*res.success_step) : py::none();
  d["initial_image"] = to_array(res.initial_image);
  d["final_image"] = to_array(res.final_image);
  d["p_fake_steps"] = res.p_fake_steps;
  d["final_p_fake"] = res.final_p_fake;
  if (manifold) {
    d["final_z"] = to_array(res.final_z.values);
    d["final_noise"] = noise_to_list(res.final_noise.levels);
  } else {
    d["linf"] = res.linf_perturbation;
    d["l2"] = res.l2_perturbation;
  }
  if (!res.step_images.empty()) {
    std::vector<py::array_t<double>> steps;
    for (const auto& img : res.step_images) steps.push_back(to_array(img));
    d["step_images"] = steps;
  }
  return d;
}

void bind_synthesis(py::module_& m) {
  py::class_<synthesis::GeneratorConfig>(m, "GeneratorConfig")
      .def(py::init<>())
      .def_readwrite("d_z", &synthesis::GeneratorConfig::d_z)
      .def_readwrite("d_w", &synthesis::GeneratorConfig::d_w)
      .def_readwrite("mapping_depth", &synthesis::GeneratorConfig::mapping_depth)
      .def_readwrite("levels", &synthesis::GeneratorConfig::levels)
      .def_readwrite("base_resolution", &synthesis::GeneratorConfig::base_resolution)
      .def_readwrite("out_channels", &synthesis::GeneratorConfig::out_channels)
      .def_readwrite("features", &synthesis::GeneratorConfig::features)
      .def_readwrite("lrelu_slope", &synthesis::GeneratorConfig::lrelu_slope)
      .def("output_resolution", &synthesis::GeneratorConfig::output_resolution)
      .def("validate", &synthesis::GeneratorConfig::validate);

  py::class_<synthesis::Generator>(m, "Generator")
      .def_static("random_init", &synthesis::Generator::random_init, py::arg("config"),
                  py::arg("seed"))
      .def_static("zero_init", &synthesis::Generator::zero_init, py::arg("config"))
      .def_property_readonly("config", &synthesis::Generator::config)
      .def("map_latent",
           [](const synthesis::Generator& g, const py::array_t<double>& z) {
             return to_array(g.map_latent(synthesis::LatentVector{to_tensor(z)}).values);
           })
      .def("synthesize",
           [](const synthesis::Generator& g, const py::array_t<double>& w,
              const std::vector<py::array_t<double>>& noise) {
             return to_array(g.synthesize(synthesis::StyleVector{to_tensor(w)}, to_noise(noise)));
           })
      .def("generate",
           [](const synthesis::Generator& g, const py::array_t<double>& z,
              const std::vector<py::array_t<double>>& noise) {
             return to_array(g.generate(synthesis::LatentVector{to_tensor(z)}, to_noise(noise)));
           })
      .def("checksum", &synthesis::Generator::checksum)
      .def("save", [](const synthesis::Generator& g, const std::string& path) {
        io::save_generator(g, path);
      })
      .def_static("load", [](const std::string& path) { return io::load_generator(path); });

  m.def("sample_latent",
        [](std::uint64_t seed, int d_z) { return to_array(synthesis::sample_latent(seed, d_z).values); },
        py::arg("seed"), py::arg("d_z"));
  m.def("sample_noise",
        [](std::uint64_t seed, const synthesis::GeneratorConfig& cfg) {
          return noise_to_list(synthesis::sample_noise(seed, cfg).levels);
        },
        py::arg("seed"), py::arg("config"));
}

void bind_forensics(py::module_& m) {
  py::class_<forensics::Detector>(m, "Detector")
      .def_static(
          "random_init",
          [](const std::string& arch, std::uint64_t seed, int resolution) {
            return forensics::Detector::random_init(parse_arch(arch), seed, resolution);
          },
          py::arg("arch"), py::arg("seed"), py::arg("input_resolution") = 32)
      .def_static(
          "zero_init",
          [](const std::string& arch, int resolution) {
            return forensics::Detector::zero_init(parse_arch(arch), resolution);
          },
          py::arg("arch"), py::arg("input_resolution") = 32)
      .def("predict",
           [](const forensics::Detector& d, const py::array_t<double>& img) {
             forensics::Prediction p = d.predict(to_tensor(img));
             return py::make_tuple(p.logit, p.p_fake, p.label);
           })
      .def("input_gradient",
           [](const forensics::Detector& d, const py::array_t<double>& img, int y) {
             Tensor g;
             double loss = d.loss_and_input_grad(to_tensor(img), y, g);
             return py::make_tuple(loss, to_array(g));
           })
      .def_property_readonly("arch",
                             [](const forensics::Detector& d) {
                               return std::string(1, forensics::arch_id(d.arch()));
                             })
      .def_property_readonly("best_val_accuracy", &forensics::Detector::best_val_accuracy)
      .def("checksum", &forensics::Detector::checksum)
      .def("save", [](const forensics::Detector& d, const std::string& path) {
        io::save_detector(d, path);
      })
      .def_static("load", [](const std::string& path) { return io::load_detector(path); });

  m.def("bce_loss", &forensics::bce_loss, py::arg("p_fake"), py::arg("y"));
  m.def(
      "train_detector",
      [](const std::string& arch, const std::vector<py::array_t<double>>& train_images,
         const std::vector<int>& train_labels, const std::vector<py::array_t<double>>& val_images,
         const std::vector<int>& val_labels, double learning_rate, double weight_decay, int epochs,
         int validations_per_epoch, int batch_size, std::uint64_t seed) {
        forensics::TrainConfig cfg;
        cfg.learning_rate = learning_rate;
        cfg.weight_decay = weight_decay;
        cfg.epochs = epochs;
        cfg.validations_per_epoch = validations_per_epoch;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        return forensics::train_detector(parse_arch(arch), parse_corpus(train_images, train_labels),
                                         parse_corpus(val_images, val_labels), cfg);
      },
      py::arg("arch"), py::arg("train_images"), py::arg("train_labels"), py::arg("val_images"),
      py::arg("val_labels"), py::arg("learning_rate") = 2e-4, py::arg("weight_decay") = 1e-3,
      py::arg("epochs") = 3, py::arg("validations_per_epoch") = 5, py::arg("batch_size") = 32,
      py::arg("seed") = 0);
  m.def("evaluate_accuracy",
        [](const forensics::Detector& det, const std::vector<py::array_t<double>>& images,
           const std::vector<int>& labels) {
          return forensics::evaluate_accuracy(det, parse_corpus(images, labels));
        });
}

void bind_attacks(py::module_& m) {
  m.def("sign", [](const py::array_t<double>& v) { return to_array(attacks::sign(to_tensor(v))); });
  m.def("latent_step",
        [](const py::array_t<double>& z, const py::array_t<double>& grad, double eps) {
          return to_array(
              attacks::latent_step(synthesis::LatentVector{to_tensor(z)}, to_tensor(grad), eps)
                  .values);
        },
        py::arg("z"), py::arg("grad_z"), py::arg("eps"));
  m.def("noise_step",
        [](const std::vector<py::array_t<double>>& noise,
           const std::vector<py::array_t<double>>& grads, double eps,
           const std::optional<std::set<int>>& levels) {
          std::vector<Tensor> gt;
          for (const auto& g : grads) gt.push_back(to_tensor(g));
          return noise_to_list(attacks::noise_step(to_noise(noise), gt, eps, levels).levels);
        },
        py::arg("noise"), py::arg("grad_noise"), py::arg("eps"), py::arg("levels") = py::none());
  m.def("fgsm_attack",
        [](const forensics::Detector& det, const py::array_t<double>& x, int y, double eps) {
          return to_array(attacks::fgsm_attack(det, to_tensor(x), y, eps));
        },
        py::arg("detector"), py::arg("image"), py::arg("y") = 1, py::arg("eps_max") = 0.3);
  m.def(
      "pgd_attack",
      [](const std::vector<const forensics::Detector*>& detectors, const py::array_t<double>& x,
         int y, const std::string& norm, double eps_max, double alpha, int iters,
         const std::optional<std::string>& ensemble) {
        attacks::NormAttackConfig cfg = attacks::NormAttackConfig::pgd_defaults(
            norm == "l2" ? attacks::NormKind::kL2 : attacks::NormKind::kLinf);
        cfg.eps_max = eps_max;
        cfg.alpha = alpha;
        cfg.iters = iters;
        std::optional<attacks::EnsembleConfig> ens;
        if (ensemble) ens = attacks::EnsembleConfig{parse_ensemble(*ensemble), {}};
        return result_to_dict(attacks::pgd_attack(detectors, to_tensor(x), y, cfg, ens), false);
      },
      py::arg("detectors"), py::arg("image"), py::arg("y") = 1, py::arg("norm") = "linf",
      py::arg("eps_max") = 0.3, py::arg("alpha") = 0.01, py::arg("iters") = 40,
      py::arg("ensemble") = py::none());
  m.def(
      "manifold_attack",
      [](const synthesis::Generator& gen, const std::vector<const forensics::Detector*>& detectors,
         const py::array_t<double>& z, const std::vector<py::array_t<double>>& noise,
         const std::string& strategy, int noise_level, double eps_latent, double eps_noise,
         int max_iters, bool stop_on_success, bool record_step_images,
         const std::optional<std::string>& ensemble) {
        attacks::ManifoldAttackConfig cfg;
        cfg.strategy = parse_strategy(strategy);
        cfg.noise_level = noise_level;
        cfg.eps_latent = eps_latent;
        cfg.eps_noise = eps_noise;
        cfg.max_iters = max_iters;
        cfg.stop_on_success = stop_on_success;
        cfg.record_step_images = record_step_images;
        std::optional<attacks::EnsembleConfig> ens;
        if (ensemble) ens = attacks::EnsembleConfig{parse_ensemble(*ensemble), {}};
        return result_to_dict(
            attacks::manifold_attack(gen, detectors, synthesis::LatentVector{to_tensor(z)},
                                     to_noise(noise), cfg, ens),
            true);
      },
      py::arg("generator"), py::arg("detectors"), py::arg("z"), py::arg("noise"),
      py::arg("strategy") = "latent+noise", py::arg("noise_level") = 1,
      py::arg("eps_latent") = 0.004, py::arg("eps_noise") = 0.05, py::arg("max_iters") = 10,
      py::arg("stop_on_success") = true, py::arg("record_step_images") = false,
      py::arg("ensemble") = py::none());
}

void bind_metrics(py::module_& m) {
  m.def("mse", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return metrics::mse(to_tensor(a), to_tensor(b));
  });
  m.def("psnr",
        [](const py::array_t<double>& a, const py::array_t<double>& b, double max_value,
           double cap) { return metrics::psnr(to_tensor(a), to_tensor(b), max_value, cap); },
        py::arg("a"), py::arg("b"), py::arg("max_value") = 1.0, py::arg("cap_db") = 100.0);
  m.def("ssim",
        [](const py::array_t<double>& a, const py::array_t<double>& b, int window, double k1,
           double k2) { return metrics::ssim(to_tensor(a), to_tensor(b), window, k1, k2); },
        py::arg("a"), py::arg("b"), py::arg("window") = 7, py::arg("k1") = 0.01,
        py::arg("k2") = 0.03);

  py::class_<metrics::FeatureNet>(m, "FeatureNet")
      .def_static("load", [](const std::string& path) { return io::load_feature_net(path); })
      .def("save", [](const metrics::FeatureNet& fn, const std::string& path) {
        io::save_feature_net(fn, path);
      })
      .def("checksum", &metrics::FeatureNet::checksum);
  m.def("perceptual_distance",
        [](const py::array_t<double>& a, const py::array_t<double>& b,
           const metrics::FeatureNet& fn) {
          return metrics::perceptual_distance(to_tensor(a), to_tensor(b), fn);
        });
  m.def(
      "train_feature_net",
      [](const std::vector<py::array_t<double>>& images, const std::vector<int>& labels, int steps,
         int batch_size, double learning_rate, std::uint64_t seed) {
        metrics::FeatureNetTrainConfig cfg;
        cfg.steps = steps;
        cfg.batch_size = batch_size;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        return metrics::train_feature_net(parse_corpus(images, labels), cfg);
      },
      py::arg("images"), py::arg("labels"), py::arg("steps") = 300, py::arg("batch_size") = 32,
      py::arg("learning_rate") = 1e-3, py::arg("seed") = 0);
}

void bind_dataset(py::module_& m) {
  m.def("render_face",
        [](std::uint64_t seed, int resolution) {
          return to_array(dataset::render_face(seed, resolution));
        },
        py::arg("seed"), py::arg("resolution") = 32);
  m.def(
      "build_real_corpus",
      [](std::uint64_t seed, int n, int resolution) {
        auto corpus = dataset::build_real_corpus(seed, n, resolution);
        std::vector<py::array_t<double>> images;
        for (const auto& li : corpus) images.push_back(to_array(li.image));
        return images;
      },
      py::arg("seed"), py::arg("n"), py::arg("resolution") = 32);
  m.def(
      "build_fake_corpus",
      [](const synthesis::Generator& gen, std::uint64_t seed, int n) {
        auto corpus = dataset::build_fake_corpus(gen, seed, n);
        std::vector<py::array_t<double>> images;
        for (const auto& li : corpus) images.push_back(to_array(li.image));
        return images;
      },
      py::arg("generator"), py::arg("seed"), py::arg("n"));
  m.def(
      "train_generator",
      [](const synthesis::GeneratorConfig& config, const std::vector<py::array_t<double>>& reals,
         int steps, int batch_size, std::uint64_t seed) {
        std::vector<forensics::LabeledImage> corpus;
        for (const auto& img : reals) corpus.push_back({to_tensor(img), 0});
        gan::GanTrainConfig cfg;
        cfg.steps = steps;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        return gan::train_generator(config, corpus, cfg, nullptr);
      },
      py::arg("config"), py::arg("real_images"), py::arg("steps") = 1200,
      py::arg("batch_size") = 8, py::arg("seed") = 0);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Manifold-space adversarial attacks on fake-image detectors";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  bind_synthesis(m);
  bind_forensics(m);
  bind_attacks(m);
  bind_metrics(m);
  bind_dataset(m);
}
