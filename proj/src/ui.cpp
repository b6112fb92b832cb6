#include "parbci/ui.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace parbci {

namespace {

constexpr double kClockEps = 1e-9;

const std::vector<Entry> kAnswers{{"yes", "Yes"}, {"no", "No"}, {"no_answer", "Don't want to answer"}};

int root_size(const UiConfig& cfg) { return static_cast<int>(cfg.root.items.size()); }

int ring_size(const UiState& s, const UiConfig& cfg) {
  switch (s.view) {
  case View::main_menu: return root_size(cfg);
  case View::confirmation: return 4;
  case View::simple_answers: return static_cast<int>(kAnswers.size());
  case View::training: return 2;
  case View::speller_stub: return static_cast<int>(cfg.speller_letters.size()) + 1;
  }
  return 1;
}

int wrap(int i, int n) { return ((i % n) + n) % n; }

// Root item index of confirmation entry `k` (k < 3).
int confirmation_item(const UiState& s, int k, const UiConfig& cfg) {
  const int n = root_size(cfg);
  if (k == 0) return s.origin;
  return wrap(s.origin + (k == 1 ? -1 : 1), n);
}

UiState restart(UiState s, View v, int highlighted) {
  s.view = v;
  s.highlighted = highlighted;
  s.ring_start = s.clock;
  return s;
}

// State after the root item `item` has been selected (confirmed or shortcut).
UiOutcome select_item(const UiState& s, int item, const UiConfig& cfg) {
  const MenuItem& it = cfg.root.items[static_cast<std::size_t>(item)];
  UiOutcome out;
  out.actions.push_back({it.action, {}, s.clock});
  UiState next = s;
  next.origin = item;
  if (it.action == kSpellerAction)
    out.state = restart(next, View::speller_stub, 0);
  else if (it.action == kTrainingAction)
    out.state = restart(next, View::training, 0);
  else
    out.state = restart(next, View::main_menu, item);
  return out;
}

UiOutcome on_par(const UiState& s, const UiConfig& cfg) {
  UiOutcome out;
  switch (s.view) {
  case View::main_menu: {
    UiState next = s;
    next.origin = s.highlighted;
    out.state = restart(next, View::confirmation, 0);
    return out;
  }
  case View::confirmation:
    if (s.highlighted == 0) return select_item(s, s.origin, cfg);
    if (s.highlighted == 3) {
      out.state = restart(s, View::main_menu, s.origin);
      return out;
    }
    {
      UiState next = s;
      next.origin = confirmation_item(s, s.highlighted, cfg);
      out.state = restart(next, View::confirmation, 0);
    }
    return out;
  case View::simple_answers: {
    const Entry& answer = kAnswers[static_cast<std::size_t>(s.highlighted)];
    out.actions.push_back({"answer", answer.caption, s.clock});
    const SavedView back = s.overlay_return.value_or(SavedView{});
    UiState next = s;
    next.origin = back.origin;
    next.overlay_return.reset();
    out.state = restart(next, back.view, back.highlighted);
    return out;
  }
  case View::training:
    if (s.highlighted == 0) {
      out.actions.push_back({"start_training", {}, s.clock});
      out.state = s;
    } else {
      out.state = restart(s, View::main_menu, s.origin);
    }
    return out;
  case View::speller_stub: {
    const int letters = static_cast<int>(cfg.speller_letters.size());
    if (s.highlighted < letters) {
      out.actions.push_back({"keystroke", std::string(1, cfg.speller_letters[static_cast<std::size_t>(s.highlighted)]), s.clock});
      out.state = s;
    } else {
      out.state = restart(s, View::main_menu, s.origin);
    }
    return out;
  }
  }
  out.state = s;
  return out;
}

UiOutcome on_mi(const UiState& s, const Label& label, const UiConfig& cfg) {
  UiOutcome out;
  out.state = s;
  if (s.mode != UiMode::multimodal) {
    out.notices.push_back("mi(" + label + ") ignored: par_only mode");
    return out;
  }
  if (s.view == View::simple_answers) {
    out.notices.push_back("mi(" + label + ") ignored: simple answers shown");
    return out;
  }
  const MenuItem* target = cfg.shortcut_target(label);
  if (target == nullptr || std::find(s.shortcuts.begin(), s.shortcuts.end(), label) == s.shortcuts.end()) {
    out.notices.push_back("mi(" + label + ") ignored: no shortcut bound");
    return out;
  }
  const auto idx = std::distance(cfg.root.items.data(), target);
  return select_item(s, static_cast<int>(idx), cfg);
}

UiOutcome on_button(const UiState& s) {
  UiOutcome out;
  if (s.view == View::simple_answers) {
    out.state = s;
    out.notices.push_back("external_button ignored: simple answers already shown");
    return out;
  }
  UiState next = s;
  next.overlay_return = SavedView{s.view, s.highlighted, s.origin};
  out.state = restart(next, View::simple_answers, 0);
  return out;
}

bool passes(const PerformanceMetrics& m, const ModeThresholds& th) {
  if (!(m.separability >= th.separability)) return false;
  bool any_task = false;
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    if (m.classes[i] == kIdle) continue;
    any_task = true;
    if (!(m.consistency[i] >= th.consistency)) return false;
  }
  return any_task;
}

} // namespace

std::string to_string(View v) {
  switch (v) {
  case View::main_menu: return "main_menu";
  case View::confirmation: return "confirmation";
  case View::simple_answers: return "simple_answers";
  case View::training: return "training";
  case View::speller_stub: return "speller_stub";
  }
  return "?";
}

std::string to_string(UiMode m) { return m == UiMode::multimodal ? "multimodal" : "par_only"; }

std::string to_string(UiEventKind k) {
  switch (k) {
  case UiEventKind::par_task: return "par_task";
  case UiEventKind::mi: return "mi";
  case UiEventKind::external_button: return "external_button";
  case UiEventKind::tick: return "tick";
  }
  return "?";
}

View parse_view(const std::string& s) {
  for (View v : {View::main_menu, View::confirmation, View::simple_answers, View::training, View::speller_stub})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown view: " + s);
}

UiMode parse_mode(const std::string& s) {
  if (s == "par_only") return UiMode::par_only;
  if (s == "multimodal") return UiMode::multimodal;
  throw std::invalid_argument("unknown mode: " + s);
}

void MenuDef::validate() const {
  if (items.size() < 2) throw std::invalid_argument("menu needs at least 2 items");
  if (!(dwell > 0.0) || !std::isfinite(dwell)) throw std::invalid_argument("menu dwell must be > 0");
  std::set<std::string> ids;
  for (const auto& it : items) {
    if (it.id.empty() || it.action.empty()) throw std::invalid_argument("menu item needs an id and an action");
    if (it.id == kGoBack) throw std::invalid_argument("menu item id 'go_back' is reserved");
    if (!ids.insert(it.id).second) throw std::invalid_argument("duplicate menu item id: " + it.id);
  }
}

MenuDef default_root_menu() {
  return MenuDef{{{"caregiver", "Call caregiver", kCaregiverAction},
                  {"speller", "Speller", kSpellerAction},
                  {"training", "Mental task training", kTrainingAction},
                  {"comfort", "Comfort", "comfort"},
                  {"leisure", "Leisure", "leisure"}},
                 1.0};
}

void UiConfig::validate() const {
  root.validate();
  auto has = [&](const std::string& action) {
    return std::any_of(root.items.begin(), root.items.end(), [&](const MenuItem& it) { return it.action == action; });
  };
  if (!has(kCaregiverAction)) throw std::invalid_argument("root menu needs a caregiver item");
  if (!has(kTrainingAction)) throw std::invalid_argument("root menu needs a training item");
  if (!(confirmation_dwell > 0.0) || !std::isfinite(confirmation_dwell))
    throw std::invalid_argument("confirmation dwell must be > 0");
  if (speller_letters.empty()) throw std::invalid_argument("speller needs at least one letter");
  for (const auto& [label, id] : shortcuts) {
    if (label == kIdle) throw std::invalid_argument("idle cannot carry a shortcut");
    if (shortcut_target(label) == nullptr) throw std::invalid_argument("shortcut target is not a root item: " + id);
  }
}

const MenuItem* UiConfig::shortcut_target(const Label& label) const {
  for (const auto& [l, id] : shortcuts) {
    if (l != label) continue;
    for (const auto& it : root.items)
      if (it.id == id) return &it;
  }
  return nullptr;
}

UiState initial_state(const UiConfig& cfg) {
  cfg.validate();
  return UiState{};
}

double view_dwell(View v, const UiConfig& cfg) {
  return v == View::confirmation || v == View::simple_answers ? cfg.confirmation_dwell : cfg.root.dwell;
}

std::vector<Entry> entries(const UiState& s, const UiConfig& cfg) {
  const Entry back{kGoBack, "Go back"};
  auto item_entry = [&](int i) {
    const auto& it = cfg.root.items[static_cast<std::size_t>(i)];
    return Entry{it.id, it.caption};
  };
  switch (s.view) {
  case View::main_menu: {
    std::vector<Entry> out;
    for (int i = 0; i < root_size(cfg); ++i) out.push_back(item_entry(i));
    return out;
  }
  case View::confirmation:
    return {item_entry(confirmation_item(s, 0, cfg)), item_entry(confirmation_item(s, 1, cfg)),
            item_entry(confirmation_item(s, 2, cfg)), back};
  case View::simple_answers: return kAnswers;
  case View::training: return {{"start_training", "Start training"}, back};
  case View::speller_stub: {
    std::vector<Entry> out;
    for (char c : cfg.speller_letters) out.push_back({std::string(1, c), std::string(1, c)});
    out.push_back(back);
    return out;
  }
  }
  return {};
}

UiState tick(const UiState& s, double dt, const UiConfig& cfg) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("tick needs dt > 0");
  const double dwell = view_dwell(s.view, cfg);
  const double before = s.clock - s.ring_start;
  const double after = before + dt;
  const auto steps = static_cast<long long>(std::floor(after / dwell + kClockEps)) -
                     static_cast<long long>(std::floor(before / dwell + kClockEps));
  const int n = ring_size(s, cfg);
  UiState out = s;
  out.highlighted = static_cast<int>((s.highlighted + steps % n) % n);
  out.clock = s.clock + dt;
  return out;
}

UiOutcome on_event(const UiState& s, const UiEvent& e, const UiConfig& cfg) {
  if (e.kind == UiEventKind::tick) return {tick(s, e.dt, cfg), {}, {}};
  if (e.timestamp < s.clock - kClockEps)
    throw std::invalid_argument("event timestamp " + std::to_string(e.timestamp) + " precedes the ui clock");
  const UiState now = e.timestamp > s.clock ? tick(s, e.timestamp - s.clock, cfg) : s;
  switch (e.kind) {
  case UiEventKind::par_task: return on_par(now, cfg);
  case UiEventKind::mi: return on_mi(now, e.label, cfg);
  case UiEventKind::external_button: return on_button(now);
  case UiEventKind::tick: break;
  }
  return {now, {}, {}};
}

ModeDecision unlock_multimodal(std::span<const PerformanceMetrics> history, const ModeThresholds& th) {
  if (th.sessions < 1) throw std::invalid_argument("mode window must be >= 1 session");
  ModeDecision d;
  int pass_run = 0, fail_run = 0;
  for (const auto& m : history) {
    if (passes(m, th)) {
      ++pass_run;
      fail_run = 0;
    } else {
      ++fail_run;
      pass_run = 0;
    }
    if (pass_run >= th.sessions) d.mode = UiMode::multimodal;
    if (fail_run >= th.sessions) d.mode = UiMode::par_only;
  }
  if (d.mode == UiMode::multimodal) {
    const auto& last = history.back();
    for (std::size_t i = 0; i < last.classes.size(); ++i)
      if (last.classes[i] != kIdle && last.consistency[i] >= th.consistency) d.shortcuts.push_back(last.classes[i]);
  }
  return d;
}

UiState apply_mode(const UiState& s, const ModeDecision& d) {
  UiState out = s;
  out.mode = d.mode;
  out.shortcuts = d.shortcuts;
  return out;
}

} // namespace parbci
