#pragma once

// Single-session service over one dataset and its latest segmentation.
//
// Handlers are transport-free: each takes the request pieces and returns a
// status code with a JSON body, so they can be exercised without sockets.
// serve_http() binds them to the routes
//
//   POST /api/segment           params document            -> 202 {job}
//   GET  /api/jobs/{id}                                    -> job status
//   GET  /api/centers?<prop>=<min>:<max>&page=&page_size=  -> center table page
//   GET  /api/features/{id}?t=&slice=axis:index&window=t1:t2
//   POST /api/merge             {"eps_m": x}               -> merged table
//   GET  /api/dataset/meta
//
// Errors carry {"error": message} plus "field" for parameter problems.

#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mfseg/pipeline.hpp"

namespace mfseg {

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
};

using QueryParams = std::vector<std::pair<std::string, std::string>>;

enum class JobStatus { Queued, Running, Done, Failed };
const char* job_status_name(JobStatus s);

struct ServiceConfig {
  DatasetSource source;
  /// Jobs write their artifacts to <out>/jobs/<id>.
  std::filesystem::path out;
  EngineOptions options;
  ClusterParams defaults;
  std::size_t page_size = 50;
  /// Called on the job thread once the job is running, before the engine
  /// starts.
  std::function<void(const std::string& job)> on_job_start;
};

class Service {
 public:
  /// Loads the dataset. An existing segmentation in `config.out` (written by
  /// the CLI) becomes the initial result when it belongs to the same source.
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response segment(const std::string& body);
  Response job(const std::string& id) const;
  Response centers(const QueryParams& query) const;
  Response feature(const std::string& id, const QueryParams& query) const;
  Response merge(const std::string& body);
  Response dataset_meta() const;

  /// Blocks until no job is queued or running.
  void wait_idle();

 private:
  struct Job {
    std::string id;
    JobStatus status = JobStatus::Queued;
    int iteration = 0;
    double max_delta = 0;
    std::string error;
    std::filesystem::path artifacts;
  };
  /// Immutable view served to readers; replaced wholesale.
  struct Snapshot {
    std::shared_ptr<const SegmentationArtifacts> seg;
    MergeArtifacts merge;
    std::vector<Feature> features;
    std::filesystem::path dir;
  };

  std::shared_ptr<const Snapshot> snapshot() const;
  std::shared_ptr<const Snapshot> make_snapshot(std::shared_ptr<const SegmentationArtifacts> seg,
                                                MergeArtifacts merge, std::filesystem::path dir) const;
  void run_job(std::string id, ClusterParams params);

  ServiceConfig config_;
  Dataset data_;
  mutable std::mutex mutex_;
  std::mutex merge_mutex_;
  std::condition_variable idle_;
  std::map<int, Job> jobs_;
  int next_job_ = 1;
  bool busy_ = false;
  std::thread worker_;
  std::shared_ptr<const Snapshot> current_;
};

/// HTTP binding of a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and returns the port (an ephemeral one when `port` is 0), or -1.
  int bind(const std::string& host, int port);
  /// Blocks while serving.
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mfseg
