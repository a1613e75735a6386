#include "conagents/trajectory.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

namespace conagents {

std::string serialize_event(const TrajectoryEvent& event) {
    return to_json(event).dump(-1, ' ', false, json::error_handler_t::replace);
}

void MemoryTrajectorySink::write(const TrajectoryEvent& event) {
    std::lock_guard lock(mu_);
    events_.push_back(event);
}

std::vector<TrajectoryEvent> MemoryTrajectorySink::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

FileTrajectorySink::FileTrajectorySink(const std::filesystem::path& path, bool truncate)
    : path_(path) {
    int flags = O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC;
    if (truncate) flags |= O_TRUNC;
    fd_ = ::open(path.c_str(), flags, 0644);
    if (fd_ < 0) {
        throw Error(ErrorKind::Io,
                    "cannot open trajectory log " + path.string() + ": " + std::strerror(errno));
    }
}

FileTrajectorySink::~FileTrajectorySink() {
    if (fd_ >= 0) ::close(fd_);
}

void FileTrajectorySink::write(const TrajectoryEvent& event) {
    std::string line = serialize_event(event);
    line.push_back('\n');

    std::lock_guard lock(mu_);
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
        throw Error(ErrorKind::Io, "cannot stat trajectory log " + path_.string());
    }
    const ssize_t n = ::write(fd_, line.data(), line.size());
    if (n != static_cast<ssize_t>(line.size())) {
        const int err = errno;
        if (n > 0) {
            // Drop the partial line.
            [[maybe_unused]] const int rc = ::ftruncate(fd_, st.st_size);
        }
        throw Error(ErrorKind::Io, "write to trajectory log " + path_.string() + " failed: " +
                                       (n < 0 ? std::strerror(err) : "short write"));
    }
}

void trajectory_write(TrajectorySink& sink, const TrajectoryEvent& event) {
    validate(event);
    sink.write(event);
}

std::vector<TrajectoryEvent> read_trajectory_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open trajectory log " + path.string());

    std::vector<TrajectoryEvent> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            events.push_back(trajectory_event_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                              ": corrupt trajectory record: " + e.what());
        }
    }
    return events;
}

}  // namespace conagents
