#pragma once

#include <mutex>
#include <string>
#include <vector>

namespace setupx {

// Append-only run diary shared by the agents of one run; written out next to
// the trajectory by the orchestrator.
class RunLog {
public:
    void note(const std::string& line) {
        std::lock_guard lock(mutex_);
        lines_.push_back(line);
    }

    std::vector<std::string> lines() const {
        std::lock_guard lock(mutex_);
        return lines_;
    }

    bool contains(const std::string& needle) const {
        std::lock_guard lock(mutex_);
        for (const auto& line : lines_)
            if (line.find(needle) != std::string::npos) return true;
        return false;
    }

private:
    mutable std::mutex mutex_;
    std::vector<std::string> lines_;
};

}  // namespace setupx
