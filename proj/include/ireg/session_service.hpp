#pragma once

// Interactive sessions over the Algorithm-1 loop. A session's listener is
// either the model listener or a person clicking objects.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "ireg/interaction.hpp"
#include "ireg/persistence.hpp"

namespace ireg {

enum class SessionMode { kHuman, kAnnotator, kModel };
std::string to_string(SessionMode mode);
SessionMode session_mode_from_string(const std::string& name);

/// Carries the HTTP status and a machine-readable code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct SessionServiceConfig {
  InteractiveConfig interactive;
  std::uint64_t seed = 0;
};

class SessionService {
 public:
  SessionService(const Dataset& data, const Speaker& ireg, const Speaker& reinforced, const Listener& listener,
                 SessionServiceConfig config = {});

  /// {split, mode, max_round?, scene_id?, target_index?, evaluator_id?}
  Json create_session(const Json& request);
  /// {object_id}
  Json click(const std::string& session_id, const Json& request);
  Json trace(const std::string& session_id);
  Json summary(const std::string& session_id);
  /// Accuracy over completed human-mode sessions.
  Json human_summary(const std::optional<std::string>& evaluator_id = std::nullopt);
  std::string render(const std::string& scene_id);

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    SessionMode mode = SessionMode::kHuman;
    Split split = Split::kTest;
    std::string evaluator_id;
    const Scene* scene = nullptr;
    std::unique_ptr<Episode> episode;
  };

  std::shared_ptr<Session> find(const std::string& session_id);
  Json session_view(const Session& s) const;

  const Dataset& data_;
  const Speaker& ireg_;
  const Speaker& reinforced_;
  const Listener& listener_;
  SessionServiceConfig config_;
  std::map<Split, std::vector<RefSample>> splits_;

  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace ireg
