#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <json.hpp>

#include "brachy/service/pipeline.hpp"

namespace brachy {

/// One planning case. Copies are cheap: bulky members are shared and
/// immutable, so a command mutates a copy and the store swaps it in.
struct SessionState {
  std::string id;
  std::uint64_t revision = 0;
  TemplateConfig config;

  std::shared_ptr<const ScalarVolume> volume;
  std::string volume_path;
  std::string volume_id;

  std::map<int, LandmarkPick> landmarks;  // by pick index
  std::optional<RigidTransformd> initial_pose;
  double fre = 0;

  std::optional<RoiBox> roi;
  std::optional<double> threshold;
  IcpSource icp_source = IcpSource::Voxels;
  std::shared_ptr<const PointCloud> image_points;

  std::optional<IcpSummary> icp;
  std::optional<RigidTransformd> pose;  // model -> image, current estimate

  std::shared_ptr<const TriangleMesh> tumor_mesh;  // image frame
  std::shared_ptr<const ObbTree> tumor_tree;

  std::optional<double> depth;
  std::vector<NeedleState> needles;  // empty until select-needles

  std::vector<LandmarkPick> ordered_landmarks() const;
};

struct CommandOutcome {
  nlohmann::ordered_json delta;
  bool mutated = false;
};

/// Command names accepted by apply_command.
inline constexpr const char* kCommandTypes[] = {
    "load-volume", "set-landmark",  "register-initial", "set-roi",       "set-threshold", "run-icp",
    "nudge-pose",  "set-tumor",     "select-needles",   "toggle-needle", "set-depth",     "export-plan"};

/// Applies one command to `s` in place. On a throw `s` may be partly
/// modified; callers work on a copy. Out-of-order commands throw
/// StageError, bad payloads InputError.
CommandOutcome apply_command(SessionState& s, const std::string& type, const nlohmann::json& payload);

/// Plan for the session's current state; StageError until a pose and a
/// needle selection exist.
Plan session_plan(const SessionState& s);

nlohmann::ordered_json session_to_json(const SessionState& s);
nlohmann::ordered_json mesh_to_json(const TriangleMesh& m);
TriangleMesh mesh_from_json(const nlohmann::json& j);

/// In-memory store. Mutations of one session are serialised; reads see
/// the last committed snapshot and never wait for a running command.
class SessionStore {
 public:
  explicit SessionStore(TemplateConfig default_config = {});

  std::string create(const std::optional<TemplateConfig>& config = std::nullopt);
  /// Throws NotFound for an unknown id.
  std::shared_ptr<const SessionState> snapshot(const std::string& id) const;
  bool exists(const std::string& id) const;
  /// Name of the command in progress, empty when idle.
  std::string status(const std::string& id) const;
  /// Checks `revision` against the committed state (ConflictError on
  /// mismatch), applies the command to a copy and commits it; the
  /// revision advances by one only for successful mutating commands.
  CommandOutcome command(const std::string& id, std::uint64_t revision, const std::string& type,
                         const nlohmann::json& payload);

 private:
  struct Slot {
    std::mutex writer;
    mutable std::shared_mutex guard;
    std::shared_ptr<const SessionState> state;
    std::string running;  // guarded by `guard`
  };
  std::shared_ptr<Slot> slot(const std::string& id) const;

  TemplateConfig default_config_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t next_id_ = 1;
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& what) : Error("not-found", what) {}
};

}  // namespace brachy
