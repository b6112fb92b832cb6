#pragma once

#include "parbci/eeg.hpp"
#include "parbci/mdm.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace parbci {

enum class View { main_menu, confirmation, simple_answers, training, speller_stub };
enum class UiMode { par_only, multimodal };

std::string to_string(View v);
std::string to_string(UiMode m);
View parse_view(const std::string& s);
UiMode parse_mode(const std::string& s);

// Root item actions with a dedicated view or a required presence.
inline const std::string kCaregiverAction = "caregiver";
inline const std::string kSpellerAction = "speller";
inline const std::string kTrainingAction = "training";
inline const std::string kGoBack = "go_back";

struct MenuItem {
  std::string id;
  std::string caption;
  std::string action;
};

struct MenuDef {
  std::vector<MenuItem> items;
  double dwell{1.0}; // s per highlighted item

  // >= 2 items, unique ids, dwell > 0. Throws std::invalid_argument.
  void validate() const;
};

// Caregiver, Speller, Mental task training, Comfort, Leisure.
MenuDef default_root_menu();

struct UiConfig {
  MenuDef root{default_root_menu()};
  double confirmation_dwell{1.5}; // confirmation and simple-answers rings
  std::string speller_letters{"ABCDEFGHIJKLMNOPQRSTUVWXYZ_"};
  std::vector<std::pair<Label, std::string>> shortcuts{{"right_hand", "speller"}, {"left_hand", "caregiver"}};

  // Root menu must hold a caregiver and a training item; shortcut targets must
  // be root item ids.
  void validate() const;
  const MenuItem* shortcut_target(const Label& label) const;
};

struct SavedView {
  View view{View::main_menu};
  int highlighted{0};
  int origin{0};
  bool operator==(const SavedView&) const = default;
};

struct UiState {
  View view{View::main_menu};
  int highlighted{0}; // index into entries(state, config)
  int origin{0};      // root item that opened the confirmation
  UiMode mode{UiMode::par_only};
  std::vector<Label> shortcuts; // labels whose MI shortcut is enabled
  double clock{0.0};
  double ring_start{0.0};                // clock at which the arrow last restarted
  std::optional<SavedView> overlay_return; // view under the simple-answers overlay

  bool operator==(const UiState&) const = default;
};

UiState initial_state(const UiConfig& cfg);

struct Entry {
  std::string id;
  std::string caption;
};

// Ring of the current view. Confirmation: selected, left neighbour, right
// neighbour, go-back. Simple answers: Yes, No, Don't want to answer.
std::vector<Entry> entries(const UiState& s, const UiConfig& cfg);
double view_dwell(View v, const UiConfig& cfg);

enum class UiEventKind { par_task, mi, external_button, tick };
std::string to_string(UiEventKind k);

struct UiEvent {
  UiEventKind kind{UiEventKind::tick};
  double timestamp{0.0};
  Label label; // mi only
  double dt{0.0}; // tick only

  static UiEvent par(double t) { return {UiEventKind::par_task, t, {}, 0.0}; }
  static UiEvent mi(double t, Label l) { return {UiEventKind::mi, t, std::move(l), 0.0}; }
  static UiEvent button(double t) { return {UiEventKind::external_button, t, {}, 0.0}; }
  static UiEvent tick(double dt) { return {UiEventKind::tick, 0.0, {}, dt}; }
};

struct Action {
  std::string kind;  // root item action, "answer", "keystroke" or "start_training"
  std::string value; // answer text or letter
  double timestamp{0.0};
  bool operator==(const Action&) const = default;
};

struct UiOutcome {
  UiState state;
  std::vector<Action> actions;
  std::vector<std::string> notices; // ignored inputs; never change the state
};

// Advances the arrow by floor((clock+dt)/dwell) - floor(clock/dwell) items,
// with the clock measured from ring_start. Throws std::invalid_argument on dt <= 0.
UiState tick(const UiState& s, double dt, const UiConfig& cfg);

// Pure transition. Non-tick events first advance the clock to their
// timestamp; a timestamp before the clock throws std::invalid_argument.
UiOutcome on_event(const UiState& s, const UiEvent& e, const UiConfig& cfg);

struct ModeThresholds {
  int sessions{3};            // K
  double separability{1.0};   // theta_s
  double consistency{0.5};    // theta_c
};

struct ModeDecision {
  UiMode mode{UiMode::par_only};
  std::vector<Label> shortcuts; // tasks whose own consistency clears theta_c
};

// Forward switch when the last K sessions all pass; reversion when K
// consecutive sessions fail. Idle is not a trained task.
ModeDecision unlock_multimodal(std::span<const PerformanceMetrics> history, const ModeThresholds& th = {});

UiState apply_mode(const UiState& s, const ModeDecision& d);

} // namespace parbci
