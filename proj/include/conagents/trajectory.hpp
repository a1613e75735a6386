#pragma once

#include <filesystem>
#include <mutex>
#include <vector>

#include "conagents/core.hpp"

namespace conagents {

// Destination for trajectory events. Implementations must accept writes
// from concurrently running tasks.
class TrajectorySink {
public:
    virtual ~TrajectorySink() = default;
    virtual void write(const TrajectoryEvent& event) = 0;
};

// Serializes one event as a single log line (no trailing newline).
std::string serialize_event(const TrajectoryEvent& event);

class MemoryTrajectorySink final : public TrajectorySink {
public:
    void write(const TrajectoryEvent& event) override;
    std::vector<TrajectoryEvent> events() const;

private:
    mutable std::mutex mu_;
    std::vector<TrajectoryEvent> events_;
};

// Appends newline-delimited events to a file. Each line goes out in a
// single write(2); a short write is rolled back with ftruncate so no
// partial line remains.
class FileTrajectorySink final : public TrajectorySink {
public:
    // truncate=true starts a fresh log.
    explicit FileTrajectorySink(const std::filesystem::path& path, bool truncate = true);
    ~FileTrajectorySink() override;

    FileTrajectorySink(const FileTrajectorySink&) = delete;
    FileTrajectorySink& operator=(const FileTrajectorySink&) = delete;

    void write(const TrajectoryEvent& event) override;

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex mu_;
};

// Validates and writes one event.
void trajectory_write(TrajectorySink& sink, const TrajectoryEvent& event);

// Reads a log written by FileTrajectorySink. Errors name the 1-based line.
std::vector<TrajectoryEvent> read_trajectory_log(const std::filesystem::path& path);

}  // namespace conagents
