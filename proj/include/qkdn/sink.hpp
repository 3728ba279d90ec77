// Event sinks: everything observable (messages, consumption, alarms) flows
// through a TraceSink as one JSON object per event.
#pragma once

#include <memory>
#include <vector>

#include <json.hpp>

namespace qkdn {

using json = nlohmann::json;

struct TraceSink {
    virtual ~TraceSink() = default;
    virtual void emit(const json& line) = 0;
};

// Test/in-memory sink.
class CollectingSink : public TraceSink {
public:
    void emit(const json& line) override { lines.push_back(line); }
    std::vector<json> lines;
};

}  // namespace qkdn
