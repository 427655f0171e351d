#include "qdnet/log.hpp"

#include <iostream>

#include "qdnet/util.hpp"

namespace qdnet {

EventLog::EventLog(const std::string& path) : path_(path) {
    if (!path.empty()) {
        out_.open(path, std::ios::app);
        if (!out_) {
            to_stderr_ = true;
            std::cerr << "{\"level\":\"error\",\"event\":\"log_sink_unwritable\","
                         "\"detail\":\""
                      << path << "\"}\n";
        }
    } else {
        to_stderr_ = true;
    }
}

void EventLog::record(const std::string& event, json fields,
                      const std::string& level) {
    fields["ts"] = iso_timestamp();
    fields["level"] = level;
    fields["event"] = event;
    std::lock_guard lock(mutex_);
    if (to_stderr_) {
        std::cerr << fields.dump() << "\n";
    } else {
        out_ << fields.dump() << "\n";
        out_.flush();
    }
}

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    std::vector<json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(json::parse(line));
    }
    return records;
}

}  // namespace qdnet
