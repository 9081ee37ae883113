#pragma once

// Experiment configuration: one JSON document with arch / train / data /
// profile / seeds sections, strict about unknown keys. Every CLI run writes
// its resolved config next to its outputs so runs are self-describing.

#include <cstdint>
#include <string>
#include <vector>

#include "vmct/dataset.hpp"
#include "vmct/json_util.hpp"
#include "vmct/train.hpp"

namespace vmct {

struct ProfileConfig {
    int size = 512;
    int batch = 1;
    int n_warmup = 2;
    int n_runs = 10;

    void validate() const;
};

struct Seeds {
    std::uint64_t data = 1;
    std::uint64_t init = 2;
    std::uint64_t train = 3;
};

struct RunConfig {
    ArchConfig arch;
    TrainConfig train;  // train.seed mirrors seeds.train after loading
    DataConfig data;
    ProfileConfig profile;
    Seeds seeds;

    void validate() const;
};

// Comma-separated lower-case phase names, e.g. "angio,portal".
std::vector<ContrastPhase> parse_phase_list(const std::string& csv);
Json phases_to_json(const std::vector<ContrastPhase>& phases);
std::vector<ContrastPhase> phases_from_json(const Json& j, const std::string& ctx);

Json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const Json& j);

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace vmct
