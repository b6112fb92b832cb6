#pragma once

#include "parbci/config.hpp"
#include "parbci/mdm.hpp"
#include "parbci/nf.hpp"
#include "parbci/pupil.hpp"
#include "parbci/ui.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace parbci {

inline constexpr int kLogVersion = 1;

enum class SessionKind { free_use, training };
std::string to_string(SessionKind k);
SessionKind parse_session_kind(const std::string& s);

// Append-only SessionEvent stream. Each event is one JSON line
//   {"v":1,"seq":n,"t":seconds,"kind":"...","payload":{...}}
// with gap-free seq from 0 and non-decreasing t.
class EventLog {
public:
  using Observer = std::function<void(const std::string& line)>;

  void set_observer(Observer o) { observer_ = std::move(o); }
  // Throws std::logic_error if t precedes the previous event.
  void append(double t, const std::string& kind, Json payload);

  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const; // lines joined with '\n', trailing newline

private:
  std::vector<std::string> lines_;
  double last_t_{0.0};
  Observer observer_;
};

struct LogEvent {
  long long seq{0};
  double t{0.0};
  std::string kind;
  Json payload;
};

// Throws std::runtime_error on malformed lines or version mismatch.
LogEvent parse_log_line(const std::string& line);
std::vector<std::string> read_log(const std::string& path);

// Upper triangle, row-major.
Json covariance_to_json(const SpdMatrix& c);
SpdMatrix covariance_from_json(const Json& j);

// ---- operator commands ---------------------------------------------------------

// Inbound wire message: {"v":1,"seq":n,"cmd":"inject_par"|"inject_mi"|
// "press_button"|"pause"|"resume"|"set_speed", "label":..., "factor":...}
struct OperatorCommand {
  std::string command;
  Label label;       // inject_mi
  double factor{1.0}; // set_speed
  std::string source{"console"}; // "auto" for engine-issued resumes
  std::optional<long long> client_seq;
  int client{-1};

  bool operator==(const OperatorCommand&) const = default;
};

// Throws std::invalid_argument describing the problem.
OperatorCommand parse_command(const std::string& line);
// Log payload; client routing fields are not recorded.
Json command_to_json(const OperatorCommand& c);
OperatorCommand command_from_json(const Json& j);

// ---- engines ---------------------------------------------------------------------

// Debounces classifications into MI intents.
class MiGate {
public:
  explicit MiGate(MiGateOptions opt = {}) : opt_(opt) {}
  // Returns the label when it has just been sustained for opt.epochs epochs.
  std::optional<Label> push(const Label& label, double score);
  void reset();

private:
  MiGateOptions opt_;
  Label last_;
  int run_{0};
};

// Free navigation: pupil samples drive PAR tasks, EEG epochs drive MI
// intents in multimodal mode, operator commands inject UI events.
class FreeUseEngine {
public:
  FreeUseEngine(const SessionConfig& cfg, MiModel model, UiState initial, EventLog& log);

  // Logs session_start (with `start_payload`), the initial snapshot, mode and ui_state.
  void begin(const Json& start_payload);
  void pupil(const PupilSample& s);
  void epoch(double start, double end, const SpdMatrix& cov, const Label& truth);
  void command(const OperatorCommand& c);
  void finish(double t);

  double clock() const { return clock_; }
  const UiState& ui() const { return ui_; }
  const MiModel& model() const { return model_; }

private:
  void advance(double t);
  void apply(const UiEvent& e);
  void publish_if_changed();
  void publish_state();

  const SessionConfig& cfg_;
  MiModel model_;
  UiState ui_;
  UiState published_;
  EventLog& log_;
  PupilConditioner conditioner_;
  ParDetector detector_;
  MiGate gate_;
  double clock_{0.0};
};

// Neurofeedback trials. Operator UI commands are logged and ignored.
class TrainingEngine {
public:
  TrainingEngine(const SessionConfig& cfg, const MiModel& model, ProgressState prior, EventLog& log);

  void begin(const Json& start_payload);
  void trial_start(double t, int index, const Label& task);
  void epoch(double start, double end, const SpdMatrix& cov);
  void trial_end(double t);
  void command(const OperatorCommand& c);
  void finish(double t);

  double clock() const { return clock_; }
  const MiModel& model() const { return session_.model(); }
  const ProgressState& progress() const { return after_; }

private:
  const SessionConfig& cfg_;
  MiModel initial_;
  ProgressState prior_;
  ProgressState after_;
  TrainingSession session_;
  EventLog& log_;
  int trial_index_{-1};
  double clock_{0.0};
};

// ---- drivers -------------------------------------------------------------------------

// Operator console endpoint as seen by the session driver.
class ConsoleLink {
public:
  virtual ~ConsoleLink() = default;
  virtual void publish(const std::string& line) = 0;
  virtual std::vector<OperatorCommand> poll() = 0;
  // Blocks up to `timeout_ms` for the next command.
  virtual std::optional<OperatorCommand> wait(int timeout_ms) = 0;
  // Empty error = success.
  virtual void reply(const OperatorCommand& c, const std::string& error) = 0;
  virtual void wait_ready() {}
  virtual int clients() const { return 1; }
};

struct SessionResult {
  SessionKind kind{SessionKind::free_use};
  std::vector<std::string> log;
  MiModel model;
  std::optional<ProgressState> progress; // training only
};

// Calibration model from a simulated block run over the curriculum classes
// (4 s blocks cycling idle and each task), processed by the online pipeline.
MiModel calibrate_model(const SessionConfig& cfg);
MiModel initial_model(const SessionConfig& cfg);

// Runs a session at the configured pace. With a console link, operator
// commands are merged between inputs and every event is published.
SessionResult run_session(const SessionConfig& cfg, SessionKind kind, ConsoleLink* link = nullptr);

// Re-feeds the recorded inputs (pupil samples, eeg_epoch covariances, trial
// markers, operator commands) with the initial model from the snapshot event.
// Throws std::runtime_error if the log ends before the session does.
SessionResult replay(const std::vector<std::string>& log);

// session.jsonl, model.txt and, for training, progress.json in cfg.output_dir.
void write_session_outputs(const SessionConfig& cfg, const SessionResult& r);

// Metrics of a log's labeled epochs against its final model snapshot.
PerformanceMetrics metrics_from_log(const std::vector<std::string>& log);

} // namespace parbci
