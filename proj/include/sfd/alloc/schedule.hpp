#pragma once

// Slot scheduling for two arms. A slot runs at most one segment per arm and
// lasts as long as its longest member; the next slot starts when both arms are
// done. Precedence demands strictly earlier slots; conflicting segments never
// share a slot.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfd::alloc {

struct Job {
    int id = 0;
    int arm = 0;
    double duration = 0.0;
};

struct Problem {
    std::vector<Job> jobs; // jobs[k].id == k
    std::vector<std::pair<int, int>> conflicts;
    std::vector<std::pair<int, int>> precedence; // (before, after)
};

inline constexpr int kIdle = -1;

using Slot = std::array<int, 2>; // segment id per arm or kIdle

struct Schedule {
    std::vector<Slot> slots;

    bool operator==(const Schedule&) const = default;
};

struct NoValidSchedule : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double slot_duration(const Problem& p, const Slot& s)
{
    double d = 0.0;
    for (int id : s) {
        if (id != kIdle) {
            d = std::max(d, p.jobs.at(static_cast<std::size_t>(id)).duration);
        }
    }
    return d;
}

inline double makespan(const Problem& p, const Schedule& s)
{
    double total = 0.0;
    for (const auto& slot : s.slots) {
        total += slot_duration(p, slot);
    }
    return total;
}

namespace detail {

struct Index {
    int n = 0;
    std::vector<std::uint64_t> preds;    // bitmask of required predecessors
    std::vector<std::uint64_t> conflict; // bitmask of conflicting jobs
    std::vector<double> tail;            // longest precedence chain starting here, inclusive
    std::array<std::vector<int>, 2> by_arm;

    explicit Index(const Problem& p)
    {
        n = static_cast<int>(p.jobs.size());
        if (n > 63) {
            throw std::invalid_argument("scheduler supports at most 63 segments");
        }
        preds.assign(static_cast<std::size_t>(n), 0);
        conflict.assign(static_cast<std::size_t>(n), 0);
        for (int k = 0; k < n; ++k) {
            const auto& j = p.jobs[static_cast<std::size_t>(k)];
            if (j.id != k || j.arm < 0 || j.arm > 1) {
                throw std::invalid_argument("jobs must be numbered 0..n-1 and use arm 0 or 1");
            }
            by_arm[static_cast<std::size_t>(j.arm)].push_back(k);
        }
        for (const auto& [b, a] : p.precedence) {
            check(b);
            check(a);
            preds[static_cast<std::size_t>(a)] |= bit(b);
        }
        for (const auto& [a, b] : p.conflicts) {
            check(a);
            check(b);
            conflict[static_cast<std::size_t>(a)] |= bit(b);
            conflict[static_cast<std::size_t>(b)] |= bit(a);
        }
        // Longest chain via repeated relaxation; a cycle never settles.
        tail.assign(static_cast<std::size_t>(n), 0.0);
        for (int k = 0; k < n; ++k) {
            tail[static_cast<std::size_t>(k)] = p.jobs[static_cast<std::size_t>(k)].duration;
        }
        for (int round = 0; round <= n; ++round) {
            bool changed = false;
            for (const auto& [b, a] : p.precedence) {
                const double cand = p.jobs[static_cast<std::size_t>(b)].duration + tail[static_cast<std::size_t>(a)];
                if (cand > tail[static_cast<std::size_t>(b)]) {
                    tail[static_cast<std::size_t>(b)] = cand;
                    changed = true;
                }
            }
            if (!changed) {
                break;
            }
            if (round == n) {
                throw NoValidSchedule("precedence constraints contain a cycle");
            }
        }
    }

    static std::uint64_t bit(int k) { return std::uint64_t{1} << k; }

    void check(int k) const
    {
        if (k < 0 || k >= n) {
            throw std::invalid_argument("constraint refers to unknown segment " + std::to_string(k));
        }
    }

    std::uint64_t all() const { return n == 64 ? ~0ull : bit(n) - 1; }

    // Jobs of an arm whose predecessors are all done.
    std::vector<int> ready(int arm, std::uint64_t done) const
    {
        std::vector<int> out;
        for (int k : by_arm[static_cast<std::size_t>(arm)]) {
            if (!(done & bit(k)) && (preds[static_cast<std::size_t>(k)] & ~done) == 0) {
                out.push_back(k);
            }
        }
        return out;
    }

    // Candidate slots from a state, in a fixed order.
    std::vector<Slot> moves(std::uint64_t done) const
    {
        const auto r0 = ready(0, done);
        const auto r1 = ready(1, done);
        std::vector<Slot> out;
        for (int a : r0) {
            for (int b : r1) {
                if (!(conflict[static_cast<std::size_t>(a)] & bit(b))) {
                    out.push_back({a, b});
                }
            }
        }
        for (int a : r0) {
            out.push_back({a, kIdle});
        }
        for (int b : r1) {
            out.push_back({kIdle, b});
        }
        return out;
    }

    static std::uint64_t mask(const Slot& s)
    {
        std::uint64_t m = 0;
        for (int id : s) {
            if (id != kIdle) {
                m |= bit(id);
            }
        }
        return m;
    }
};

// Slot contents sorted, for the lexicographic tie-break.
inline std::vector<std::vector<int>> id_sequence(const Schedule& s)
{
    std::vector<std::vector<int>> out;
    for (const auto& slot : s.slots) {
        std::vector<int> ids;
        for (int id : slot) {
            if (id != kIdle) {
                ids.push_back(id);
            }
        }
        std::sort(ids.begin(), ids.end());
        out.push_back(ids);
    }
    return out;
}

} // namespace detail

// Enumerates every valid slot sequence. Oracle for small instances.
inline Schedule schedule_exhaustive(const Problem& p)
{
    if (p.jobs.size() > 10) {
        throw std::invalid_argument("schedule_exhaustive is limited to 10 segments");
    }
    const detail::Index idx(p);
    std::optional<Schedule> best;
    double best_span = std::numeric_limits<double>::infinity();
    std::vector<std::vector<int>> best_key;
    Schedule cur;
    std::function<void(std::uint64_t, double)> dfs = [&](std::uint64_t done, double elapsed) {
        if (done == idx.all()) {
            auto key = detail::id_sequence(cur);
            if (elapsed < best_span || (elapsed == best_span && key < best_key)) {
                best = cur;
                best_span = elapsed;
                best_key = std::move(key);
            }
            return;
        }
        for (const auto& slot : idx.moves(done)) {
            cur.slots.push_back(slot);
            dfs(done | detail::Index::mask(slot), elapsed + slot_duration(p, slot));
            cur.slots.pop_back();
        }
    };
    dfs(0, 0.0);
    if (!best) {
        throw NoValidSchedule("no slot sequence satisfies the precedence and conflict constraints");
    }
    return *best;
}

// List scheduler: pair ready jobs when allowed, otherwise run the one heading
// the longest remaining chain.
inline Schedule schedule_greedy(const Problem& p)
{
    const detail::Index idx(p);
    Schedule s;
    std::uint64_t done = 0;
    auto better = [&](int a, int b) {
        const double ta = idx.tail[static_cast<std::size_t>(a)];
        const double tb = idx.tail[static_cast<std::size_t>(b)];
        return ta != tb ? ta > tb : a < b;
    };
    while (done != idx.all()) {
        auto r0 = idx.ready(0, done);
        auto r1 = idx.ready(1, done);
        if (r0.empty() && r1.empty()) {
            throw NoValidSchedule("no segment can start; precedence is unsatisfiable");
        }
        std::sort(r0.begin(), r0.end(), better);
        std::sort(r1.begin(), r1.end(), better);
        Slot slot{kIdle, kIdle};
        if (!r0.empty() && !r1.empty()) {
            for (int a : r0) {
                for (int b : r1) {
                    if (slot[0] == kIdle && !(idx.conflict[static_cast<std::size_t>(a)] & detail::Index::bit(b))) {
                        slot = {a, b};
                    }
                }
            }
        }
        if (slot[0] == kIdle) {
            if (r1.empty() || (!r0.empty() && better(r0.front(), r1.front()))) {
                slot = {r0.front(), kIdle};
            } else {
                slot = {kIdle, r1.front()};
            }
        }
        s.slots.push_back(slot);
        done |= detail::Index::mask(slot);
    }
    return s;
}

struct BnbStats {
    long nodes = 0;
    long pruned = 0;
};

// Depth-first branch and bound. Lower bound: elapsed time plus the larger of
// each arm's remaining work and the longest remaining precedence chain.
inline Schedule schedule_bnb(const Problem& p, BnbStats* stats = nullptr)
{
    const detail::Index idx(p);
    Schedule best = schedule_greedy(p);
    double best_span = makespan(p, best);
    std::vector<std::vector<int>> best_key = detail::id_sequence(best);

    auto bound = [&](std::uint64_t done, double elapsed) {
        std::array<double, 2> work{0.0, 0.0};
        double chain = 0.0;
        for (int k = 0; k < idx.n; ++k) {
            if (!(done & detail::Index::bit(k))) {
                work[static_cast<std::size_t>(p.jobs[static_cast<std::size_t>(k)].arm)] +=
                    p.jobs[static_cast<std::size_t>(k)].duration;
                chain = std::max(chain, idx.tail[static_cast<std::size_t>(k)]);
            }
        }
        return elapsed + std::max({work[0], work[1], chain});
    };

    BnbStats local;
    Schedule cur;
    std::function<void(std::uint64_t, double)> dfs = [&](std::uint64_t done, double elapsed) {
        ++local.nodes;
        if (done == idx.all()) {
            auto key = detail::id_sequence(cur);
            if (elapsed < best_span || (elapsed == best_span && key < best_key)) {
                best = cur;
                best_span = elapsed;
                best_key = std::move(key);
            }
            return;
        }
        if (bound(done, elapsed) > best_span) {
            ++local.pruned;
            return;
        }
        for (const auto& slot : idx.moves(done)) {
            cur.slots.push_back(slot);
            dfs(done | detail::Index::mask(slot), elapsed + slot_duration(p, slot));
            cur.slots.pop_back();
        }
    };
    dfs(0, 0.0);
    if (stats) {
        *stats = local;
    }
    return best;
}

} // namespace sfd::alloc
