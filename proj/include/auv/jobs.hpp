#pragma once

#include <functional>
#include <string>
#include <vector>

namespace auv {

using LogFn = std::function<void(const std::string&)>;

// Pipeline commands: gen-data, preprocess, train, train-toy, bake, transfer,
// fit-new, eval-seg, eval-landmarks, render-basis.
const std::vector<std::string>& job_names();

// Runs one command configured by a JSON object. Unknown keys, missing inputs
// and bad values are rejected before any output is written. Returns a JSON
// report; progress lines go to `log`.
std::string run_job(const std::string& command, const std::string& config_json, const LogFn& log = {});

}  // namespace auv
