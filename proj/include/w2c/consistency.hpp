#pragma once

#include <future>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "w2c/datamodel.hpp"
#include "w2c/stages.hpp"

namespace w2c::consistency {

/// Partition by exact name; groups appear in order of their first member.
std::vector<ConceptGroup> group_concepts(const std::vector<DetectedConcept>& concepts);

/// Axis-aligned union. Throws EmptyInput on an empty list.
BoundingBox merge_boxes(const std::vector<BoundingBox>& boxes);

/// Asks whether at least `count` instances of the group name are visible in
/// the merged-box crop. Only "yes" counts as consistent.
GroupVerdict counting_filter(stages::StageContext& ctx, const ImageRecord& image, const ConceptGroup& group);

/// Fills every candidate's sub-concepts with its distinct noun phrases, all
/// verdicts Unknown.
std::vector<CaptionCandidate> extract_candidate_concepts(std::vector<CaptionCandidate> candidates,
                                                         const std::set<std::string>& stoplist);

/// Per-image memo of validation answers keyed by (box, phrase). Concurrent
/// callers asking the same question share one backend call.
class ValidationMemo {
  public:
    using Key = std::tuple<int, int, int, int, std::string>;

    template <typename Fn>
    Verdict get_or_compute(const Key& key, Fn&& compute) {
        std::unique_lock lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) {
            std::promise<Verdict> promise;
            auto future = promise.get_future().share();
            entries_.emplace(key, future);
            lock.unlock();
            try {
                promise.set_value(compute());
            } catch (...) {
                promise.set_exception(std::current_exception());
                std::lock_guard relock(mutex_);
                entries_.erase(key);
                throw;
            }
            return future.get();
        }
        auto future = it->second;
        lock.unlock();
        return future.get();
    }

    [[nodiscard]] std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

  private:
    mutable std::mutex mutex_;
    std::map<Key, std::shared_future<Verdict>> entries_;
};

/// One validation prompt per distinct phrase against the crop of `group_box`.
std::map<std::string, Verdict> validate_concepts(stages::StageContext& ctx, const ImageRecord& image,
                                                 const BoundingBox& group_box, const std::set<std::string>& phrases,
                                                 ValidationMemo& memo);

/// Yes +1, No -1, Unknown 0. Throws MissingVerdict for an unvalidated phrase.
int score_candidate(const CaptionCandidate& candidate, const std::map<std::string, Verdict>& verdicts);

/// Highest score, lowest beam index on ties. Throws EmptyInput on an empty
/// list and InvalidValue when a candidate is unscored.
const CaptionCandidate& select_caption(const std::vector<CaptionCandidate>& candidates);

/// Runs sub-concept extraction, validation and scoring over one concept's
/// candidates and returns them scored, with verdicts filled in.
std::vector<CaptionCandidate> rerank_candidates(stages::StageContext& ctx, const ImageRecord& image,
                                                const BoundingBox& group_box, std::vector<CaptionCandidate> candidates,
                                                ValidationMemo& memo);

} // namespace w2c::consistency
