#pragma once

#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "qdnet/frame.hpp"

namespace qdnet {

// Append-only JSONL event log, one object per record. Falls back to stderr
// when the sink is unwritable.
class EventLog {
   public:
    EventLog() = default;
    explicit EventLog(const std::string& path);

    // fields are merged into {ts, level, event}.
    void record(const std::string& event, json fields = json::object(),
                const std::string& level = "info");

    const std::string& path() const { return path_; }

   private:
    std::string path_;
    std::ofstream out_;
    bool to_stderr_ = false;
    std::mutex mutex_;
};

std::vector<json> read_jsonl(const std::string& path);

}  // namespace qdnet
