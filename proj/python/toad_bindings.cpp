#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "toad/checkpoint.hpp"
#include "toad/commands.hpp"
#include "toad/error.hpp"
#include "toad/metrics.hpp"
#include "toad/run_config.hpp"
#include "toad/streaming.hpp"
#include "toad/synth.hpp"

namespace py = pybind11;
using namespace toad;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor<float> from_numpy(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<std::uint16_t> to_numpy(const std::vector<std::uint16_t>& v) {
  py::array_t<std::uint16_t> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<std::uint8_t> positives_of(const py::array_t<std::uint8_t, py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

ScoreTable table_of(const FloatArray& scores, const std::vector<int>& labels) {
  ScoreTable t{from_numpy(scores), labels};
  return t;
}

py::dict report_dict(const MapReport& r) {
  py::dict per_class;
  for (const auto& c : r.classes) per_class[py::int_(c.class_index)] = c.ap;
  py::dict d;
  d["mean"] = r.mean;
  d["calibrated"] = r.calibrated;
  d["per_class"] = per_class;
  d["skipped"] = r.skipped;
  return d;
}

py::dict video_dict(const Video& v) {
  py::dict d;
  d["video_id"] = v.features.video_id;
  d["fps"] = v.features.fps;
  d["features"] = to_numpy(v.features.features);
  d["labels"] = to_numpy(v.labels.labels);
  return d;
}

Video video_of(const FloatArray& features, const std::vector<int>& labels, std::size_t classes) {
  Video v;
  v.features.features = from_numpy(features);
  v.labels.classes = classes;
  v.labels.labels.reserve(labels.size());
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw LabelError("label out of range");
    v.labels.labels.push_back(static_cast<std::uint16_t>(l));
  }
  return v;
}

SynthConfig synth_config(const py::kwargs& kw) {
  SynthConfig sc;
  for (const auto& [k, v] : kw) {
    const auto key = k.cast<std::string>();
    if (key == "classes") sc.classes = v.cast<std::size_t>();
    else if (key == "dim") sc.dim = v.cast<std::size_t>();
    else if (key == "videos") sc.videos = v.cast<std::size_t>();
    else if (key == "frames") sc.frames = v.cast<std::size_t>();
    else if (key == "sep") sc.sep = v.cast<double>();
    else if (key == "noise") sc.noise = v.cast<double>();
    else if (key == "instance_spread") sc.instance_spread = v.cast<double>();
    else if (key == "min_segment") sc.min_segment = v.cast<std::size_t>();
    else if (key == "max_segment") sc.max_segment = v.cast<std::size_t>();
    else if (key == "transitions") sc.transitions = parse_transition_mode(v.cast<std::string>());
    else if (key == "background_noise_only") sc.background_noise_only = v.cast<bool>();
    else if (key == "text_jitter") sc.text_jitter = v.cast<double>();
    else if (key == "seed") sc.seed = v.cast<std::uint64_t>();
    else if (key == "world_seed") sc.world_seed = v.cast<std::uint64_t>();
    else throw ConfigError("unknown synth option '" + key + "'");
  }
  return sc;
}

RunConfig run_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  auto cfg = RunConfig::load(path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

py::dict eval_dict(const EvalResult& r) {
  py::dict d;
  d["mAP"] = report_dict(r.map);
  d["mcAP"] = report_dict(r.mcap);
  d["frame_accuracy"] = r.frame_accuracy;
  d["future_accuracy"] = r.future_accuracy ? py::cast(*r.future_accuracy) : py::none();
  d["frames"] = r.frames;
  return d;
}

py::list table_rows(const Table& t) {
  py::list rows;
  for (const auto& r : t.rows) {
    py::dict row;
    for (std::size_t i = 0; i < t.header.size() && i < r.size(); ++i) row[py::str(t.header[i])] = r[i];
    rows.append(row);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_toad, m) {
  m.doc() = "Online action detection core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", data.ptr());
  py::register_exception<LabelError>(m, "LabelError", data.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.attr("NO_LABEL") = kNoLabel;

  // metrics
  m.def("average_precision", [](const FloatArray& s, const py::array_t<std::uint8_t, py::array::forcecast>& p) {
    const auto pos = positives_of(p);
    return average_precision({s.data(), static_cast<std::size_t>(s.size())}, pos);
  }, py::arg("scores"), py::arg("positives"));
  m.def("calibrated_ap", [](const FloatArray& s, const py::array_t<std::uint8_t, py::array::forcecast>& p,
                            std::optional<double> w) {
    const auto pos = positives_of(p);
    return calibrated_ap({s.data(), static_cast<std::size_t>(s.size())}, pos,
                         w ? *w : negative_positive_ratio(pos));
  }, py::arg("scores"), py::arg("positives"), py::arg("w") = py::none(),
     "w defaults to the negative/positive ratio of the labels");
  m.def("calibrated_precision", &calibrated_precision, py::arg("tp"), py::arg("fp"), py::arg("w"));
  m.def("map_report", [](const FloatArray& scores, const std::vector<int>& labels, bool calibrated) {
    return report_dict(map_report(table_of(scores, labels), calibrated));
  }, py::arg("scores"), py::arg("labels"), py::arg("calibrated") = false);
  m.def("frame_accuracy", [](const FloatArray& scores, const std::vector<int>& labels) {
    return frame_accuracy(table_of(scores, labels));
  });

  // data
  m.def("window_indices", &window_indices, py::arg("t"), py::arg("length"), py::arg("rate") = 6);
  m.def("save_features", [](const std::filesystem::path& path, const FloatArray& a, float fps,
                            const std::string& id) {
    save_features(path, FeatureSequence{id, fps, from_numpy(a)});
  }, py::arg("path"), py::arg("features"), py::arg("fps") = 30.0f, py::arg("video_id") = "");
  m.def("load_features", [](const std::filesystem::path& path) {
    return to_numpy(load_features(path).features);
  });
  m.def("save_labels", [](const std::filesystem::path& path, const std::vector<std::uint16_t>& labels,
                          std::size_t classes) {
    save_labels(path, LabelTrack{"", classes, labels});
  }, py::arg("path"), py::arg("labels"), py::arg("classes"));
  m.def("load_labels", [](const std::filesystem::path& path) {
    const auto t = load_labels(path);
    return py::make_tuple(to_numpy(t.labels), t.classes);
  });
  m.def("save_text_embeddings", [](const std::filesystem::path& path, const FloatArray& a, int mode) {
    save_text_embeddings(path, TextEmbeddings{static_cast<TextMode>(mode), from_numpy(a)});
  }, py::arg("path"), py::arg("embeddings"), py::arg("mode") = 1);
  m.def("load_text_embeddings", [](const std::filesystem::path& path) {
    const auto t = load_text_embeddings(path);
    return py::make_tuple(to_numpy(t.embeddings), static_cast<int>(t.mode));
  });
  m.def("load_dataset", [](const std::filesystem::path& dir) {
    const auto d = load_dataset(dir);
    py::list videos;
    for (const auto& v : d.videos) videos.append(video_dict(v));
    return videos;
  });

  // synthetic data
  m.def("synth", [](const py::kwargs& kw) {
    const auto s = synth_dataset(synth_config(kw));
    py::list videos;
    for (const auto& v : s.dataset.videos) videos.append(video_dict(v));
    py::dict d;
    d["videos"] = videos;
    d["anchors"] = to_numpy(s.anchors);
    d["class_names"] = s.vocab.names;
    d["class_name_embeddings"] = to_numpy(s.class_name.embeddings);
    d["prompt_embeddings"] = to_numpy(s.prompt.embeddings);
    d["future_embeddings"] = to_numpy(s.future.embeddings);
    return d;
  }, "Generate a synthetic world in memory; keyword arguments mirror the synth subcommand");
  m.def("synth_to_dir", [](const std::filesystem::path& out, std::size_t test_videos, const py::kwargs& kw) {
    cmd_synth(synth_config(kw), test_videos, out);
  }, py::arg("out_dir"), py::arg("test_videos") = 2);

  // model and streaming
  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p).model; })
      .def_property_readonly("dim", [](const Model& mm) { return mm.config.dim; })
      .def_property_readonly("window", [](const Model& mm) { return mm.config.window; })
      .def_property_readonly("classes", [](const Model& mm) { return mm.config.classes; })
      .def("score_window", [](const Model& mm, const FloatArray& w) {
        const auto s = score_window(mm.config, mm.params, from_numpy(w));
        return py::make_tuple(to_numpy(s.current),
                              s.future.size() ? py::object(to_numpy(s.future)) : py::none());
      })
      .def("score_offline", [](const Model& mm, const FloatArray& f, std::size_t rate) {
        Video v = video_of(f, std::vector<int>(f.shape(0), 0), mm.config.classes);
        return to_numpy(score_video_offline(mm, v, rate).scores);
      }, py::arg("features"), py::arg("rate") = 6)
      .def("run_stream", [](const Model& mm, const FloatArray& f, std::size_t rate, std::size_t stride) {
        Video v = video_of(f, std::vector<int>(f.shape(0), 0), mm.config.classes);
        const auto r = run_stream(mm, v, rate, 60, stride);
        return py::make_tuple(to_numpy(r.current.scores),
                              r.future.size() ? py::object(to_numpy(r.future)) : py::none());
      }, py::arg("features"), py::arg("rate") = 6, py::arg("eval_stride") = 1);

  py::class_<StreamState>(m, "Stream")
      .def(py::init<const Model&, std::size_t, std::size_t>(), py::keep_alive<1, 2>(),
           py::arg("model"), py::arg("rate") = 6, py::arg("eval_stride") = 1)
      .def("push", [](StreamState& s, const FloatArray& frame) {
        const auto& r = s.push_frame({frame.data(), static_cast<std::size_t>(frame.size())});
        return py::make_tuple(to_numpy(r.current),
                              r.future.size() ? py::object(to_numpy(r.future)) : py::none());
      })
      .def("reset", &StreamState::reset)
      .def_property_readonly("frames_seen", &StreamState::frames_seen)
      .def_property_readonly("capacity", &StreamState::capacity);

  // commands, driven by a run config file plus key overrides
  using Overrides = std::map<std::string, std::string>;
  m.def("train", [](const std::string& cfg, const Overrides& o) {
    std::ostringstream log;
    const auto r = cmd_train(run_config(cfg, o), log);
    py::list losses;
    for (const auto& e : r.result.log) losses.append(e.loss);
    py::dict d;
    d["checkpoint"] = r.checkpoint_path.string();
    d["losses"] = losses;
    d["iterations_per_epoch"] = r.result.iterations_per_epoch;
    return d;
  }, py::arg("config"), py::arg("overrides") = Overrides{});
  m.def("evaluate", [](const std::string& cfg, const Overrides& o) {
    std::ostringstream log;
    return eval_dict(cmd_eval(run_config(cfg, o), log));
  }, py::arg("config"), py::arg("overrides") = Overrides{});
  m.def("zeroshot", [](const std::string& cfg, const Overrides& o) {
    std::ostringstream log;
    return table_rows(cmd_zeroshot(run_config(cfg, o), log));
  }, py::arg("config"), py::arg("overrides") = Overrides{});
}
