#pragma once

// Factory registration and entry dispatch for resolved experiment configs.
//
// Keys read from a resolved config:
//   trainer.name        trainer stub ("stats")
//   data.reader         dataset reader (default "dexdata")
//   data.root           Dexdata root directory
//   inference.backend   policy backend ("zero", "pcontrol", "replay")
//   inference.host/port gateway bind address (default 127.0.0.1:8000)
//   inference.dof, inference.gain, inference.replay_path  backend parameters

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "dexkit/action_codec.hpp"
#include "dexkit/dexdata.hpp"
#include "dexkit/exp_config.hpp"
#include "dexkit/ingest.hpp"
#include "dexkit/serve.hpp"

namespace dexkit::experiment {

using config::ResolvedConfig;

/// Streams every frame of a dataset once, in episode order.
class DatasetReader {
 public:
  virtual ~DatasetReader() = default;
  virtual std::vector<dexdata::EpisodeMeta> episodes() const = 0;
  virtual void for_each_frame(const std::function<void(const dexdata::EpisodeMeta&, const dexdata::EpisodeFrame&)>& fn) const = 0;
};

/// Reads a Dexdata directory, using index_cache.json when present.
class DexdataReader : public DatasetReader {
 public:
  explicit DexdataReader(std::filesystem::path root) : layout_{std::move(root)} {}

  std::vector<dexdata::EpisodeMeta> episodes() const override {
    if (std::filesystem::exists(layout_.index_path())) {
      std::vector<dexdata::EpisodeMeta> out;
      for (auto& e : ingest::read_index_cache(layout_).episodes) out.push_back(std::move(e.meta));
      return out;
    }
    auto scan = dexdata::scan_dataset(layout_);
    if (scan.report.has_errors()) {
      throw Error(ErrorCode::ValidationFailed, std::to_string(scan.report.error_count()) + " validation error(s) in " + layout_.root.string());
    }
    return std::move(scan.episodes);
  }

  void for_each_frame(const std::function<void(const dexdata::EpisodeMeta&, const dexdata::EpisodeFrame&)>& fn) const override {
    for (const auto& meta : episodes()) {
      for (const auto& frame : dexdata::read_episode_frames(layout_.resolve(meta.jsonl_path))) fn(meta, frame);
    }
  }

 private:
  dexdata::DatasetLayout layout_;
};

using BackendFactory = std::function<std::shared_ptr<const serve::PolicyBackend>(const Json& inference)>;
using ReaderFactory = std::function<std::unique_ptr<DatasetReader>(const Json& data)>;
using TrainerFactory = std::function<Json(const ResolvedConfig&, const DatasetReader&)>;

struct FactoryRegistry {
  config::Registry<BackendFactory> policy_backends{"policy_backend"};
  config::Registry<TrainerFactory> trainers{"trainer_stub"};
  config::Registry<ReaderFactory> readers{"dataset_reader"};

  void freeze() {
    policy_backends.freeze();
    trainers.freeze();
    readers.freeze();
  }
};

namespace detail {

inline const Json& section(const ResolvedConfig& cfg, const char* name) {
  static const Json kEmpty = Json::object();
  auto it = cfg.sections.find(name);
  return it == cfg.sections.end() ? kEmpty : *it;
}

template <typename T>
T get_or(const Json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::BadConfig, std::string("config key '") + key + "' has the wrong type");
  }
}

inline std::string require_string(const Json& obj, const std::string& where, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) throw Error(ErrorCode::BadConfig, "config needs string '" + where + "." + key + "'");
  return it->get<std::string>();
}

}  // namespace detail

/// Frame, episode and action statistics from one pass over the dataset.
inline Json stats_trainer(const ResolvedConfig&, const DatasetReader& reader) {
  std::size_t episodes = 0, frames = 0;
  std::optional<std::size_t> state_dim;
  std::vector<std::vector<double>> actions;
  std::string last_episode;
  reader.for_each_frame([&](const dexdata::EpisodeMeta& meta, const dexdata::EpisodeFrame& frame) {
    if (meta.jsonl_path != last_episode) {
      ++episodes;
      last_episode = meta.jsonl_path;
    }
    ++frames;
    state_dim = frame.state.size();
    if (auto a = frame.extras.find(std::string(dexdata::kActionKey)); a != frame.extras.end()) {
      actions.push_back(a->get<std::vector<double>>());
    }
  });

  Json report = {{"trainer", "stats"}, {"num_episodes", episodes}, {"num_frames", frames}, {"state_dim", state_dim ? Json(*state_dim) : Json(nullptr)}};
  report["num_actions"] = actions.size();
  if (!actions.empty()) {
    const auto space = codec::fit_space(actions);
    std::vector<std::size_t> used(space.dims(), 0);
    std::vector<std::vector<bool>> seen(space.dims(), std::vector<bool>(codec::kBins, false));
    for (const auto& a : actions) {
      const auto tokens = codec::quantize_action(a, space);
      for (std::size_t d = 0; d < tokens.size(); ++d) {
        if (!seen[d][static_cast<std::size_t>(tokens[d])]) {
          seen[d][static_cast<std::size_t>(tokens[d])] = true;
          ++used[d];
        }
      }
    }
    report["action_space"] = codec::to_json(space);
    report["distinct_tokens_per_dim"] = used;
  }
  return report;
}

inline void register_builtins(FactoryRegistry& reg) {
  reg.policy_backends.register_factory("zero", [](const Json& p) {
    return std::make_shared<const serve::ZeroBackend>(detail::get_or<int>(p, "dof", 7));
  });
  reg.policy_backends.register_factory("pcontrol", [](const Json& p) {
    return std::make_shared<const serve::PControlBackend>(detail::get_or<double>(p, "gain", 1.0), detail::get_or<int>(p, "dof", 2));
  });
  reg.policy_backends.register_factory("replay", [](const Json& p) {
    return std::make_shared<const serve::ReplayBackend>(serve::ReplayBackend::from_file(detail::require_string(p, "inference", "replay_path")));
  });
  reg.readers.register_factory("dexdata", [](const Json& data) -> std::unique_ptr<DatasetReader> {
    return std::make_unique<DexdataReader>(detail::require_string(data, "data", "root"));
  });
  reg.trainers.register_factory("stats", stats_trainer);
}

inline FactoryRegistry builtin_registry() {
  FactoryRegistry reg;
  register_builtins(reg);
  return reg;
}

enum class Task { Train, Infer };

inline Task parse_task(const std::string& name) {
  if (name == "train") return Task::Train;
  if (name == "infer") return Task::Infer;
  throw Error(ErrorCode::UnknownTask, "unknown task '" + name + "' (expected train or infer)");
}

inline std::shared_ptr<const serve::PolicyBackend> make_backend(const FactoryRegistry& reg, const Json& inference) {
  const auto name = detail::require_string(inference, "inference", "backend");
  return reg.policy_backends.lookup(name)(inference);
}

struct DispatchHooks {
  /// Called once the gateway is listening.
  std::function<void(const serve::Gateway&)> on_ready;
  /// Polled while serving; returning true shuts the gateway down.
  std::function<bool()> should_stop = [] { return false; };
};

struct TaskResult {
  int exit_status = 0;
  Json report;
};

inline TaskResult run_train(const ResolvedConfig& cfg, const FactoryRegistry& reg) {
  const auto& trainer_cfg = detail::section(cfg, "trainer");
  const auto& data_cfg = detail::section(cfg, "data");
  const auto& trainer = reg.trainers.lookup(detail::require_string(trainer_cfg, "trainer", "name"));
  const auto reader = reg.readers.lookup(detail::get_or<std::string>(data_cfg, "reader", "dexdata"))(data_cfg);
  return {0, trainer(cfg, *reader)};
}

inline TaskResult run_infer(const ResolvedConfig& cfg, const FactoryRegistry& reg, const DispatchHooks& hooks) {
  const auto& inference = detail::section(cfg, "inference");
  auto backend = make_backend(reg, inference);
  serve::GatewayOptions opts;
  opts.host = detail::get_or<std::string>(inference, "host", "127.0.0.1");
  opts.port = detail::get_or<int>(inference, "port", 8000);
  serve::Gateway gateway(backend, opts);
  gateway.start();
  if (hooks.on_ready) hooks.on_ready(gateway);
  while (!hooks.should_stop()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  gateway.stop();
  return {0, {{"task", "infer"}, {"backend", backend->name()}, {"url", gateway.url()}, {"requests", gateway.requests_served()}}};
}

inline TaskResult dispatch_task(const ResolvedConfig& cfg, Task task, const FactoryRegistry& reg, const DispatchHooks& hooks = {}) {
  return task == Task::Train ? run_train(cfg, reg) : run_infer(cfg, reg, hooks);
}

inline TaskResult dispatch_task(const ResolvedConfig& cfg, const std::string& task, const FactoryRegistry& reg, const DispatchHooks& hooks = {}) {
  return dispatch_task(cfg, parse_task(task), reg, hooks);
}

}  // namespace dexkit::experiment
