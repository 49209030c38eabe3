#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "batchflip/client.hpp"
#include "batchflip/types.hpp"

namespace batchflip {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class EndpointUnreachable : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct CampaignConfig {
    EndpointConfig endpoint;
    std::string corpus_path;
    std::vector<ServingCondition> conditions;
    std::string baseline_condition_id;  // the condition flagged baseline
    int repeats = 1;
    std::uint64_t seed = 0;
    bool exclude_retried = true;
    std::string output_dir;
    ApiShape single_dispatch_shape = ApiShape::chat;

    // Throws ConfigError on invariant violations (no/duplicate baseline
    // flag, bad conditions, non-zero temperature).
    static CampaignConfig from_json(const json& j);
    json to_json() const;
    std::string config_hash() const;
    static CampaignConfig load(const std::string& path);
};

struct DispatchWindow {
    std::vector<std::string> request_tags;
    std::int64_t t_barrier = 0;
    std::vector<ResponseRecord> records;
    int target_index = 0;  // composition: the scored record
};

// A prompt as the dispatcher sees it.
struct DispatchItem {
    std::string prompt_id;
    std::string text;
};

// N single-prompt requests prepared up front, then released together after
// a start barrier. Transport failures mark only their own record.
DispatchWindow dispatch_synchronized(const ServingClient& client,
                                     const std::vector<DispatchItem>& items,
                                     const DecodeParams& decode,
                                     const std::string& tag_prefix,
                                     ApiShape shape = ApiShape::chat,
                                     const std::vector<int>& start_offsets_ms = {});

// One prompt-list request; records share t_start. Whole-request failure
// marks every record failed.
DispatchWindow dispatch_true_batch(const ServingClient& client,
                                   const std::vector<DispatchItem>& items,
                                   const DecodeParams& decode,
                                   const std::string& tag_prefix);

// Target plus (batch_size - 1) neighbors drawn deterministically from the
// condition's neighbor pool; the target is records[target_index].
DispatchWindow dispatch_composition(
    const ServingClient& client, const PromptSpec& target,
    const ServingCondition& condition,
    const std::map<std::string, PromptSpec>& corpus, std::uint64_t seed,
    const std::string& tag_prefix, ApiShape shape = ApiShape::chat);

enum class CobatchStatus { verified, not_verified, unverifiable };

struct CobatchReport {
    CobatchStatus status = CobatchStatus::unverifiable;
    // Overlap of [t_start, t_end] intervals as a fraction of the shorter
    // interval; -1 where either record failed.
    std::vector<std::vector<double>> pairwise_overlap;
};

CobatchReport verify_cobatch(const DispatchWindow& window,
                             double min_overlap_fraction,
                             int target_index = -1);

struct CampaignResult {
    std::int64_t records_written = 0;
    std::int64_t failures = 0;
    std::int64_t windows = 0;
    std::int64_t windows_skipped = 0;  // resume
    bool complete = true;
    std::string records_path;
    std::string manifest_path;
    json manifest;
};

// Executes the full grid condition-major, appending records window by
// window. Throws ConfigError before any request on validation failures and
// EndpointUnreachable (after writing an incomplete manifest) when the
// endpoint stops answering.
CampaignResult run_campaign(const CampaignConfig& cfg, bool resume = false,
                            std::ostream* diag = nullptr);

// Loads a records JSONL written by run_campaign.
std::vector<ResponseRecord> load_records(const std::string& path);

}  // namespace batchflip
