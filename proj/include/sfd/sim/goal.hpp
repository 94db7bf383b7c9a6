#pragma once

#include <functional>
#include <optional>

#include "sfd/sim/world.hpp"

namespace sfd::sim {

using Predicate = std::function<std::optional<std::string>(const World&, const std::vector<Event>&)>;

struct TaskGoal {
    scene::TaskTemplate task = scene::TaskTemplate::packing;
    std::vector<std::pair<std::string, Predicate>> predicates;
};

struct Evaluation {
    bool success = false;
    std::vector<std::string> reasons;
};

namespace goal_detail {

inline bool matches(const Event& e, const std::string& type, int object, const std::string& region = {})
{
    return e.type == type && e.data.value("object", -1) == object &&
           (region.empty() || e.data.value("region", std::string{}) == region);
}

inline std::optional<long> first_tick(const std::vector<Event>& log, const std::string& type, int object,
                                      const std::string& region = {})
{
    for (const auto& e : log) {
        if (matches(e, type, object, region)) {
            return e.tick;
        }
    }
    return std::nullopt;
}

inline std::optional<long> last_tick(const std::vector<Event>& log, const std::string& type, int object,
                                     const std::string& region = {})
{
    std::optional<long> out;
    for (const auto& e : log) {
        if (matches(e, type, object, region)) {
            out = e.tick;
        }
    }
    return out;
}

// Region membership at the end of a tick, replayed from the log. The state
// before the first transition is the opposite of that transition.
inline bool inside_at(const World& w, const std::vector<Event>& log, int object, const std::string& region, long tick)
{
    std::optional<bool> state;
    for (const auto& e : log) {
        const bool enter = matches(e, "region_enter", object, region);
        const bool exit = matches(e, "region_exit", object, region);
        if (!enter && !exit) {
            continue;
        }
        if (!state) {
            state = !enter;
        }
        if (e.tick > tick) {
            break;
        }
        state = enter;
    }
    if (state) {
        return *state;
    }
    return w.region(region).contains(w.poses[static_cast<std::size_t>(object)].position);
}

inline Predicate ends_in(int object, std::string region, std::string what)
{
    return [=](const World& w, const std::vector<Event>&) -> std::optional<std::string> {
        if (w.region(region).contains(w.poses[static_cast<std::size_t>(object)].position)) {
            return std::nullopt;
        }
        return what + " is not in " + region;
    };
}

} // namespace goal_detail

inline TaskGoal make_goal(const scene::EpisodeRecord& ep)
{
    using namespace goal_detail;
    TaskGoal g;
    g.task = ep.task;
    const int a = ep.targets[0];
    const int b = ep.targets[1];
    const auto name = [&](int i) {
        const auto& o = ep.objects[static_cast<std::size_t>(i)];
        return o.color + " " + o.label;
    };
    switch (ep.task) {
    case scene::TaskTemplate::packing:
        g.predicates.emplace_back("first_item_packed", ends_in(a, "box", name(a)));
        g.predicates.emplace_back("second_item_packed", ends_in(b, "box", name(b)));
        break;
    case scene::TaskTemplate::put_into_pot:
        g.predicates.emplace_back("item_in_pot", ends_in(b, "pot", name(b)));
        g.predicates.emplace_back("lid_back_on", ends_in(a, "pot_top", name(a)));
        g.predicates.emplace_back("lid_off_before_item_in",
                                  [=](const World&, const std::vector<Event>& log) -> std::optional<std::string> {
                                      const auto off = first_tick(log, "region_exit", a, "pot_top");
                                      const auto in = first_tick(log, "region_enter", b, "pot");
                                      if (!off || !in || *off >= *in) {
                                          return std::string("item entered the pot before the lid came off");
                                      }
                                      return std::nullopt;
                                  });
        g.predicates.emplace_back("item_in_before_lid_on",
                                  [=](const World&, const std::vector<Event>& log) -> std::optional<std::string> {
                                      const auto in = first_tick(log, "region_enter", b, "pot");
                                      const auto on = last_tick(log, "region_enter", a, "pot_top");
                                      if (!in || !on || *in >= *on) {
                                          return std::string("lid went back on before the item was in the pot");
                                      }
                                      return std::nullopt;
                                  });
        break;
    case scene::TaskTemplate::pouring:
        g.predicates.emplace_back("poured",
                                  [=](const World&, const std::vector<Event>& log) -> std::optional<std::string> {
                                      if (!first_tick(log, "tilt_start", b)) {
                                          return name(b) + " was never tilted";
                                      }
                                      return std::nullopt;
                                  });
        g.predicates.emplace_back("pour_after_container_placed",
                                  [=](const World& w, const std::vector<Event>& log) -> std::optional<std::string> {
                                      for (const auto& e : log) {
                                          if (matches(e, "tilt_start", b) && !inside_at(w, log, a, "work", e.tick)) {
                                              return "pour began before the " + name(a) + " was in place";
                                          }
                                      }
                                      return std::nullopt;
                                  });
        g.predicates.emplace_back("container_held_through_pour",
                                  [=](const World& w, const std::vector<Event>& log) -> std::optional<std::string> {
                                      for (const auto& e : log) {
                                          if (matches(e, "tilt_end", b) && !inside_at(w, log, a, "work", e.tick)) {
                                              return "the " + name(a) + " left before the pour ended";
                                          }
                                      }
                                      return std::nullopt;
                                  });
        g.predicates.emplace_back("can_upright",
                                  [=](const World& w, const std::vector<Event>&) -> std::optional<std::string> {
                                      if (detail::is_tilted(w, b)) {
                                          return name(b) + " is still tilted";
                                      }
                                      return std::nullopt;
                                  });
        break;
    case scene::TaskTemplate::drawer_place: {
        const Vec3 closed = ep.frames.at(0).at(static_cast<std::size_t>(a)).position;
        g.predicates.emplace_back("item_in_drawer",
                                  [=](const World& w, const std::vector<Event>&) -> std::optional<std::string> {
                                      if (w.parent[static_cast<std::size_t>(b)] != a) {
                                          return name(b) + " is not inside the " + name(a);
                                      }
                                      return std::nullopt;
                                  });
        g.predicates.emplace_back("drawer_closed",
                                  [=](const World& w, const std::vector<Event>&) -> std::optional<std::string> {
                                      if ((w.poses[static_cast<std::size_t>(a)].position - closed).norm() > 0.01) {
                                          return name(a) + " is not closed";
                                      }
                                      return std::nullopt;
                                  });
        g.predicates.emplace_back("placed_while_open",
                                  [=](const World& w, const std::vector<Event>& log) -> std::optional<std::string> {
                                      const auto put = last_tick(log, "release", b);
                                      if (!put || !inside_at(w, log, a, "drawer_open", *put)) {
                                          return name(b) + " was not placed while the drawer was open";
                                      }
                                      return std::nullopt;
                                  });
        break;
    }
    }
    return g;
}

inline Evaluation evaluate_task(const World& w, const std::vector<Event>& log, const TaskGoal& goal)
{
    if (goal.task != w.task) {
        throw std::invalid_argument("goal for " + scene::to_string(goal.task) + " evaluated on a " +
                                    scene::to_string(w.task) + " world");
    }
    Evaluation ev;
    for (const auto& [name, pred] : goal.predicates) {
        if (auto why = pred(w, log)) {
            ev.reasons.push_back(name + ": " + *why);
        }
    }
    for (const auto& e : log) {
        if (e.type == "collision") {
            ev.reasons.push_back("collision: " + e.data.value("a", std::string{}) + " and " +
                                 e.data.value("b", std::string{}) + " at tick " + std::to_string(e.tick));
        }
    }
    ev.success = ev.reasons.empty();
    return ev;
}

} // namespace sfd::sim
