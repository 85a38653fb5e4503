#pragma once

// Task banks, stage layout and track construction.
//
// Bank file schema (JSON):
//   {"version": 1,
//    "tasks": [{"task_id", "category", "prompt",
//               "options": [{"text", "label_asset"}, ...],
//               "correct_option",
//               "gate": {"width", "height", "shape", "color"}}]}
// "color" is optional: one [r,g,b] for every gate, or one per option.
// With no colour, gates take a palette colour by physical slot.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cogdrone/canonical.hpp"
#include "cogdrone/core.hpp"
#include "cogdrone/rng.hpp"

namespace cogdrone {

/// Bank schema violation, tagged with the task and the JSON field path.
class TaskBankError : public ValidationError {
 public:
  TaskBankError(std::string task_id, std::string field_path, const std::string& message)
      : ValidationError((task_id.empty() ? std::string("bank") : "task '" + task_id + "'") + ": " +
                        field_path + ": " + message),
        task_id_(std::move(task_id)),
        field_path_(std::move(field_path)) {}

  [[nodiscard]] const std::string& task_id() const { return task_id_; }
  [[nodiscard]] const std::string& field_path() const { return field_path_; }

 private:
  std::string task_id_;
  std::string field_path_;
};

struct TaskBank {
  std::int64_t version = 1;
  std::vector<TaskSpec> tasks;
  std::optional<std::string> atlas_dir;  // label image overrides, relative to the bank file

  [[nodiscard]] std::vector<const TaskSpec*> in_category(Category c) const {
    std::vector<const TaskSpec*> out;
    for (const auto& t : tasks)
      if (t.category == c) out.push_back(&t);
    return out;
  }

  [[nodiscard]] std::array<std::size_t, 3> category_counts() const {
    std::array<std::size_t, 3> n{};
    for (const auto& t : tasks) ++n[category_index(t.category)];
    return n;
  }
};

struct BankParseOptions {
  bool strict = true;  // reject unknown fields
};

namespace detail {

inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed,
                       const std::string& task_id, const std::string& path, bool strict) {
  if (!strict) return;
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; }))
      throw TaskBankError(task_id, path.empty() ? key : path + "." + key, "unknown field");
  }
}

inline const Json& require(const Json& obj, const char* key, const std::string& task_id,
                           const std::string& path) {
  if (!obj.is_object() || !obj.contains(key))
    throw TaskBankError(task_id, path.empty() ? key : path + "." + key, "missing field");
  return obj.at(key);
}

}  // namespace detail

inline TaskSpec parse_task(const Json& j, const BankParseOptions& opt, const std::string& path = "") {
  using detail::require;
  if (!j.is_object()) throw TaskBankError("", path, "task must be an object");
  std::string id;
  if (j.contains("task_id") && j["task_id"].is_string()) id = j["task_id"].get<std::string>();
  auto fail = [&](const std::string& field, const std::string& msg) -> TaskBankError {
    return TaskBankError(id, field, msg);
  };
  detail::check_keys(j, {"task_id", "category", "prompt", "options", "correct_option", "gate"}, id, "",
                     opt.strict);
  TaskSpec t;
  const auto& jid = require(j, "task_id", id, "");
  if (!jid.is_string() || jid.get<std::string>().empty()) throw fail("task_id", "must be a non-empty string");
  t.task_id = jid.get<std::string>();

  const auto& jcat = require(j, "category", id, "");
  if (!jcat.is_string()) throw fail("category", "must be a string");
  const auto cat = category_from_string(jcat.get<std::string>());
  if (!cat) throw fail("category", "unknown category '" + jcat.get<std::string>() + "'");
  t.category = *cat;

  const auto& jprompt = require(j, "prompt", id, "");
  if (!jprompt.is_string() || jprompt.get<std::string>().empty())
    throw fail("prompt", "must be a non-empty string");
  t.prompt = jprompt.get<std::string>();

  const auto& jopts = require(j, "options", id, "");
  if (!jopts.is_array()) throw fail("options", "must be an array");
  if (jopts.size() < 2) throw fail("options", "needs at least 2 options, got " + std::to_string(jopts.size()));
  for (std::size_t i = 0; i < jopts.size(); ++i) {
    const auto p = "options[" + std::to_string(i) + "]";
    const auto& o = jopts[i];
    if (!o.is_object()) throw fail(p, "must be an object");
    detail::check_keys(o, {"text", "label_asset"}, id, p, opt.strict);
    const auto& text = require(o, "text", id, p);
    const auto& asset = require(o, "label_asset", id, p);
    if (!text.is_string() || text.get<std::string>().empty()) throw fail(p + ".text", "must be a non-empty string");
    if (!asset.is_string() || !valid_asset_id(asset.get<std::string>()))
      throw fail(p + ".label_asset", "must be an identifier [A-Za-z0-9_-]+");
    t.options.push_back({text.get<std::string>(), asset.get<std::string>()});
  }

  const auto& jcorrect = require(j, "correct_option", id, "");
  if (!jcorrect.is_number_integer()) throw fail("correct_option", "must be an integer");
  const auto correct = jcorrect.get<std::int64_t>();
  if (correct < 0 || correct >= static_cast<std::int64_t>(t.options.size()))
    throw fail("correct_option", "index " + std::to_string(correct) + " out of range [0, " +
                                     std::to_string(t.options.size()) + ")");
  t.correct_option = static_cast<std::size_t>(correct);

  if (j.contains("gate")) {
    const auto& g = j["gate"];
    if (!g.is_object()) throw fail("gate", "must be an object");
    detail::check_keys(g, {"width", "height", "shape", "color"}, id, "gate", opt.strict);
    auto positive = [&](const char* key, double fallback) {
      if (!g.contains(key)) return fallback;
      if (!g[key].is_number() || !(g[key].get<double>() > 0.0))
        throw fail(std::string("gate.") + key, "must be a positive number");
      return g[key].get<double>();
    };
    t.gate.width = positive("width", 1.5);
    t.gate.height = positive("height", 1.5);
    if (g.contains("shape")) {
      try {
        t.gate.shape = gate_shape_from_string(g["shape"].get<std::string>());
      } catch (const std::exception&) {
        throw fail("gate.shape", "must be \"rectangle\" or \"circle\"");
      }
    }
    if (g.contains("color")) {
      const auto& c = g["color"];
      try {
        if (c.is_array() && !c.empty() && c[0].is_array()) {
          for (const auto& e : c) t.gate.colors.push_back(rgb_from_json(e));
        } else {
          t.gate.colors.push_back(rgb_from_json(c));
        }
      } catch (const std::exception& e) {
        throw fail("gate.color", e.what());
      }
      if (t.gate.colors.size() > 1 && t.gate.colors.size() != t.options.size())
        throw fail("gate.color", "per-option list needs one colour per option");
    }
  }
  try {
    t.validate();
  } catch (const ValidationError& e) {
    throw fail("options", e.what());
  }
  return t;
}

inline TaskBank parse_task_bank(const Json& j, const BankParseOptions& opt = {}) {
  if (!j.is_object()) throw TaskBankError("", "", "bank must be a JSON object");
  detail::check_keys(j, {"version", "tasks", "atlas"}, "", "", opt.strict);
  TaskBank bank;
  const auto& ver = detail::require(j, "version", "", "");
  if (!ver.is_number_integer()) throw TaskBankError("", "version", "must be an integer");
  bank.version = ver.get<std::int64_t>();
  if (bank.version != 1) throw TaskBankError("", "version", "unsupported version " + std::to_string(bank.version));
  if (j.contains("atlas")) bank.atlas_dir = j["atlas"].get<std::string>();
  const auto& tasks = detail::require(j, "tasks", "", "");
  if (!tasks.is_array()) throw TaskBankError("", "tasks", "must be an array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto t = parse_task(tasks[i], opt, "tasks[" + std::to_string(i) + "]");
    if (!seen.insert(t.task_id).second) throw TaskBankError(t.task_id, "task_id", "duplicate task_id");
    bank.tasks.push_back(std::move(t));
  }
  const auto counts = bank.category_counts();
  for (Category c : kCategories)
    if (counts[category_index(c)] == 0)
      throw TaskBankError("", "tasks", "category " + std::string(to_string(c)) + " has no tasks");
  return bank;
}

inline TaskBank load_task_bank(const std::filesystem::path& path, const BankParseOptions& opt = {}) {
  const auto text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw TaskBankError("", "", std::string("parse error: ") + e.what());
  }
  auto bank = parse_task_bank(j, opt);
  if (bank.atlas_dir && std::filesystem::path(*bank.atlas_dir).is_relative())
    bank.atlas_dir = (path.parent_path() / *bank.atlas_dir).string();
  return bank;
}

inline Json task_bank_json(const TaskBank& bank) {
  Json j{{"version", bank.version}, {"tasks", Json::array()}};
  for (const auto& t : bank.tasks) j["tasks"].push_back(t);
  if (bank.atlas_dir) j["atlas"] = *bank.atlas_dir;
  return j;
}

// ---------------------------------------------------------------------------
// Stage layout

enum class Arrangement { line_abreast, arc };

struct LayoutParams {
  double gate_distance = 8.0;
  double lateral_spacing = 3.0;
  std::optional<std::size_t> gate_count;  // must equal the task's option count when set
  Arrangement arrangement = Arrangement::line_abreast;
  double placement_jitter = 0.3;
  Vec3 spawn_center{0.0, 0.0, 2.0};
  double spawn_radius = 1.0;
  double spawn_yaw_jitter = 0.2;
  double time_limit = 30.0;
};

inline constexpr std::array<Rgb, 6> kSlotPalette{{
    {255, 140, 0}, {30, 144, 255}, {220, 20, 160}, {40, 200, 80}, {250, 220, 40}, {140, 80, 220}}};

/// Places one gate per option, shuffling which option lands in which slot.
inline TrackStage instantiate_stage(const TaskSpec& task, const LayoutParams& layout, Rng& rng,
                                    std::size_t stage_index = 0) {
  task.validate();
  const std::size_t k = task.options.size();
  if (layout.gate_count && *layout.gate_count != k)
    throw PlanningError("layout: gate_count " + std::to_string(*layout.gate_count) +
                        " differs from option count " + std::to_string(k));
  const double max_extent = std::max(task.gate.width, task.gate.height);
  if (!(layout.lateral_spacing > max_extent))
    throw PlanningError("layout: lateral_spacing must exceed the gate size");
  if (!(layout.gate_distance > 0.0)) throw PlanningError("layout: gate_distance must be positive");

  std::vector<std::size_t> slot_of_option(k);
  for (std::size_t i = 0; i < k; ++i) slot_of_option[i] = i;
  rng.shuffle(slot_of_option);

  TrackStage stage;
  stage.stage_index = stage_index;
  stage.task = task;
  stage.time_limit = layout.time_limit;
  stage.slots = slot_of_option;

  const Vec3 origin = layout.spawn_center;
  std::vector<Vec3> slot_center(k);
  std::vector<double> slot_yaw(k);
  for (std::size_t s = 0; s < k; ++s) {
    const double offset = (static_cast<double>(k - 1) / 2.0 - static_cast<double>(s)) * layout.lateral_spacing;
    if (layout.arrangement == Arrangement::line_abreast) {
      slot_center[s] = origin + Vec3{layout.gate_distance, offset, 0.0};
      slot_yaw[s] = 0.0;
    } else {
      const double a = offset / layout.gate_distance;
      if (std::abs(a) >= kPi / 2.0 - 0.1) throw PlanningError("layout: arc wraps behind the spawn");
      slot_center[s] = origin + Vec3{layout.gate_distance * std::cos(a), layout.gate_distance * std::sin(a), 0.0};
      slot_yaw[s] = a;
    }
    if (layout.placement_jitter > 0.0) {
      const double r = layout.placement_jitter * std::sqrt(rng.uniform());
      const double th = kTwoPi * rng.uniform();
      slot_center[s] += Vec3{r * std::cos(th), r * std::sin(th), 0.0};
    }
  }

  Vec3 centroid{};
  for (std::size_t i = 0; i < k; ++i) {
    GateSpec g;
    g.gate_id = "s" + std::to_string(stage_index) + "_g" + std::to_string(i);
    g.center = slot_center[slot_of_option[i]];
    g.yaw = slot_yaw[slot_of_option[i]];
    g.width = task.gate.width;
    g.height = task.gate.height;
    g.shape = task.gate.shape;
    if (task.gate.colors.size() == 1) {
      g.color = task.gate.colors.front();
    } else if (task.gate.colors.size() == k) {
      g.color = task.gate.colors[i];
    } else {
      g.color = kSlotPalette[slot_of_option[i] % kSlotPalette.size()];
    }
    g.label_asset = task.options[i].label_asset;
    centroid += g.center;
    stage.gates.push_back(std::move(g));
  }
  centroid = centroid * (1.0 / static_cast<double>(k));
  stage.spawn_region = SpawnRegion{origin, layout.spawn_radius, layout.spawn_yaw_jitter, centroid};
  try {
    stage.validate();
  } catch (const ValidationError& e) {
    throw PlanningError(std::string("layout infeasible: ") + e.what());
  }
  return stage;
}

// ---------------------------------------------------------------------------
// Tracks

enum class TaskSampling {
  cycle,                // reshuffled passes over the category; every task used evenly
  without_replacement,  // error if the category is too small
  with_replacement,
};

/// Chooses `per_category` tasks from each category, indexed by category_index.
inline std::array<std::vector<const TaskSpec*>, 3> select_tasks(const TaskBank& bank, std::size_t per_category,
                                                                std::uint64_t seed,
                                                                TaskSampling sampling = TaskSampling::cycle) {
  const std::size_t stages_per_category = per_category;
  std::array<std::vector<const TaskSpec*>, 3> picks;
  for (Category c : kCategories) {
    auto pool = bank.in_category(c);
    if (pool.empty()) throw TaskBankError("", "tasks", "category " + std::string(to_string(c)) + " is empty");
    Rng rng(derive_seed(seed, "select", category_index(c)));
    auto& out = picks[category_index(c)];
    switch (sampling) {
      case TaskSampling::with_replacement:
        for (std::size_t i = 0; i < stages_per_category; ++i) out.push_back(pool[rng.below(pool.size())]);
        break;
      case TaskSampling::without_replacement:
        if (pool.size() < stages_per_category)
          throw TaskBankError("", "tasks", "category " + std::string(to_string(c)) + " has only " +
                                               std::to_string(pool.size()) + " tasks");
        [[fallthrough]];
      case TaskSampling::cycle:
        while (out.size() < stages_per_category) {
          auto pass = pool;
          rng.shuffle(pass);
          for (const auto* t : pass)
            if (out.size() < stages_per_category) out.push_back(t);
        }
        break;
    }
  }
  return picks;
}

/// Builds a track with `stages_per_category` stages per category,
/// interleaved round-robin. Stage i depends only on (seed, i).
inline Track build_track(const TaskBank& bank, std::size_t stages_per_category, std::uint64_t seed,
                         const LayoutParams& layout = {}, TaskSampling sampling = TaskSampling::cycle) {
  const auto picks = select_tasks(bank, stages_per_category, seed, sampling);
  Track track;
  track.track_id = "track-" + std::to_string(seed);
  track.rng_seed = seed;
  const std::size_t total = 3 * stages_per_category;
  for (std::size_t i = 0; i < total; ++i) {
    const TaskSpec& task = *picks[i % 3][i / 3];
    Rng stage_rng(derive_seed(seed, "stage", i));
    track.stages.push_back(instantiate_stage(task, layout, stage_rng, i));
  }
  return track;
}

// ---------------------------------------------------------------------------
// Bundled sample bank

inline TaskBank sample_task_bank() {
  struct Row {
    const char* id;
    Category cat;
    const char* prompt;
    std::array<std::pair<const char*, const char*>, 3> options;
    std::size_t correct;
  };
  using C = Category;
  static const Row rows[] = {
      {"hr_01", C::human_recognition, "Fly through the gate with the person wearing round glasses.",
       {{{"person with round glasses", "portrait_glasses"}, {"person in a red cap", "portrait_red_cap"}, {"person with a beard", "portrait_beard"}}}, 0},
      {"hr_02", C::human_recognition, "Navigate to the gate showing the woman with long blond hair.",
       {{{"man with short dark hair", "portrait_dark_short"}, {"woman with long blond hair", "portrait_blond_long"}, {"child with curly hair", "portrait_child_curly"}}}, 1},
      {"hr_03", C::human_recognition, "Go to the gate with the firefighter.",
       {{{"chef", "portrait_chef"}, {"pilot", "portrait_pilot"}, {"firefighter", "portrait_firefighter"}}}, 2},
      {"hr_04", C::human_recognition, "Fly through the gate showing the famous physicist with wild white hair.",
       {{{"physicist with wild white hair", "portrait_physicist"}, {"painter with a beret", "portrait_painter"}, {"astronaut in a helmet", "portrait_astronaut"}}}, 0},
      {"hr_05", C::human_recognition, "Navigate to the gate with the person wearing a hard hat.",
       {{{"nurse", "portrait_nurse"}, {"construction worker in a hard hat", "portrait_hard_hat"}, {"police officer", "portrait_police"}}}, 1},
      {"hr_06", C::human_recognition, "Fly to the gate showing the elderly man with a grey moustache.",
       {{{"young woman with a ponytail", "portrait_ponytail"}, {"teenager with headphones", "portrait_headphones"}, {"elderly man with a grey moustache", "portrait_moustache"}}}, 2},
      {"hr_07", C::human_recognition, "Go through the gate with the football player.",
       {{{"football player", "portrait_footballer"}, {"violinist", "portrait_violinist"}, {"scientist in a lab coat", "portrait_lab_coat"}}}, 0},
      {"hr_08", C::human_recognition, "Navigate to the gate with the person wearing a green scarf.",
       {{{"person in a blue tie", "portrait_blue_tie"}, {"person with a green scarf", "portrait_green_scarf"}, {"person in sunglasses", "portrait_sunglasses"}}}, 1},
      {"hr_09", C::human_recognition, "Fly through the gate showing the first person to walk on the Moon.",
       {{{"famous playwright", "portrait_playwright"}, {"famous composer", "portrait_composer"}, {"first Moon walker", "portrait_moonwalker"}}}, 2},
      {"hr_10", C::human_recognition, "Go to the gate with the smiling woman in a yellow dress.",
       {{{"woman in a yellow dress", "portrait_yellow_dress"}, {"man in a tuxedo", "portrait_tuxedo"}, {"girl with a backpack", "portrait_backpack"}}}, 0},
      {"su_01", C::symbol_understanding, "Fly through the gate marked with the digit 7.",
       {{{"3", "digit_3"}, {"7", "digit_7"}, {"9", "digit_9"}}}, 1},
      {"su_02", C::symbol_understanding, "Navigate to the gate with the letter K.",
       {{{"A", "letter_a"}, {"R", "letter_r"}, {"K", "letter_k"}}}, 2},
      {"su_03", C::symbol_understanding, "Go to the gate showing a cat.",
       {{{"cat", "animal_cat"}, {"dog", "animal_dog"}, {"horse", "animal_horse"}}}, 0},
      {"su_04", C::symbol_understanding, "Fly through the gate with the apple logo.",
       {{{"bird logo", "logo_bird"}, {"apple logo", "logo_apple"}, {"shell logo", "logo_shell"}}}, 1},
      {"su_05", C::symbol_understanding, "Navigate to the gate with the elephant.",
       {{{"giraffe", "animal_giraffe"}, {"zebra", "animal_zebra"}, {"elephant", "animal_elephant"}}}, 2},
      {"su_06", C::symbol_understanding, "Go to the gate marked with the digit 4.",
       {{{"4", "digit_4"}, {"1", "digit_1"}, {"8", "digit_8"}}}, 0},
      {"su_07", C::symbol_understanding, "Fly through the gate with the letter Q.",
       {{{"O", "letter_o"}, {"Q", "letter_q"}, {"G", "letter_g"}}}, 1},
      {"su_08", C::symbol_understanding, "Navigate to the gate with the star-shaped logo.",
       {{{"circle logo", "logo_circle"}, {"triangle logo", "logo_triangle"}, {"star logo", "logo_star"}}}, 2},
      {"su_09", C::symbol_understanding, "Go to the gate with the owl.",
       {{{"owl", "animal_owl"}, {"eagle", "animal_eagle"}, {"parrot", "animal_parrot"}}}, 0},
      {"su_10", C::symbol_understanding, "Fly through the gate marked with the digit 2.",
       {{{"5", "digit_5"}, {"2", "digit_2"}, {"6", "digit_6"}}}, 1},
      {"rs_01", C::reasoning, "Navigate to the gate with the sweet drink.",
       {{{"soda", "soda_logo"}, {"mineral water", "water_logo"}, {"black coffee", "coffee_logo"}}}, 0},
      {"rs_02", C::reasoning, "Fly through the gate showing the result of 3 + 4.",
       {{{"6", "digit_6"}, {"7", "digit_7"}, {"8", "digit_8"}}}, 1},
      {"rs_03", C::reasoning, "Go to the gate with the animal that can fly.",
       {{{"fish", "animal_fish"}, {"turtle", "animal_turtle"}, {"eagle", "animal_eagle"}}}, 2},
      {"rs_04", C::reasoning, "Navigate to the gate showing the result of 9 - 5.",
       {{{"4", "digit_4"}, {"3", "digit_3"}, {"5", "digit_5"}}}, 0},
      {"rs_05", C::reasoning, "Fly through the gate with the object you would use in the rain.",
       {{{"sunglasses", "object_sunglasses"}, {"umbrella", "object_umbrella"}, {"fan", "object_fan"}}}, 1},
      {"rs_06", C::reasoning, "Go to the gate showing the result of 2 x 4.",
       {{{"6", "digit_6"}, {"9", "digit_9"}, {"8", "digit_8"}}}, 2},
      {"rs_07", C::reasoning, "Navigate to the gate with the fruit that is yellow.",
       {{{"banana", "fruit_banana"}, {"cherry", "fruit_cherry"}, {"grape", "fruit_grape"}}}, 0},
      {"rs_08", C::reasoning, "Fly through the gate with the animal that lives in the sea.",
       {{{"camel", "animal_camel"}, {"dolphin", "animal_dolphin"}, {"squirrel", "animal_squirrel"}}}, 1},
      {"rs_09", C::reasoning, "Go to the gate showing the number of legs on a spider.",
       {{{"4", "digit_4"}, {"6", "digit_6"}, {"8", "digit_8"}}}, 2},
      {"rs_10", C::reasoning, "Navigate to the gate with the hot drink.",
       {{{"tea", "tea_logo"}, {"lemonade", "lemonade_logo"}, {"iced juice", "juice_logo"}}}, 0},
  };
  TaskBank bank;
  for (const auto& r : rows) {
    TaskSpec t;
    t.task_id = r.id;
    t.category = r.cat;
    t.prompt = r.prompt;
    for (const auto& [text, asset] : r.options) t.options.push_back({text, asset});
    t.correct_option = r.correct;
    bank.tasks.push_back(std::move(t));
  }
  return bank;
}

}  // namespace cogdrone
