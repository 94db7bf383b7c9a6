#pragma once

// Schedule checker written independently of the schedulers.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sfd/alloc/schedule.hpp"

namespace sfd::alloc {

inline std::vector<std::string> validate_schedule(const Problem& p, const Schedule& s)
{
    std::vector<std::string> errors;
    std::map<int, int> slot_of;
    for (std::size_t k = 0; k < s.slots.size(); ++k) {
        const auto& slot = s.slots[k];
        if (slot[0] == kIdle && slot[1] == kIdle) {
            errors.push_back("slot " + std::to_string(k) + " is empty");
        }
        for (int arm = 0; arm < 2; ++arm) {
            const int id = slot[static_cast<std::size_t>(arm)];
            if (id == kIdle) {
                continue;
            }
            if (id < 0 || id >= static_cast<int>(p.jobs.size())) {
                errors.push_back("slot " + std::to_string(k) + " names unknown segment " + std::to_string(id));
                continue;
            }
            if (slot_of.count(id)) {
                errors.push_back("segment " + std::to_string(id) + " appears more than once");
            }
            slot_of[id] = static_cast<int>(k);
            if (p.jobs[static_cast<std::size_t>(id)].arm != arm) {
                errors.push_back("segment " + std::to_string(id) + " placed on the wrong arm");
            }
        }
        if (slot[0] != kIdle && slot[1] != kIdle) {
            for (const auto& [a, b] : p.conflicts) {
                if ((a == slot[0] && b == slot[1]) || (a == slot[1] && b == slot[0])) {
                    errors.push_back("slot " + std::to_string(k) + " co-schedules conflicting segments " +
                                     std::to_string(a) + " and " + std::to_string(b));
                }
            }
        }
    }
    for (const auto& j : p.jobs) {
        if (!slot_of.count(j.id)) {
            errors.push_back("segment " + std::to_string(j.id) + " is never scheduled");
        }
    }
    for (const auto& [b, a] : p.precedence) {
        if (slot_of.count(b) && slot_of.count(a) && slot_of[b] >= slot_of[a]) {
            errors.push_back("segment " + std::to_string(b) + " must finish before " + std::to_string(a) + " starts");
        }
    }
    return errors;
}

} // namespace sfd::alloc
