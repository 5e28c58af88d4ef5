#ifndef REVRANK_DATASET_HPP_
#define REVRANK_DATASET_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "revrank/errors.hpp"

namespace revrank {

/*!
 * \brief One ad candidate inside an auction.
 *
 * The revenue label y is always click * bid and is recomputed whenever a
 * record is built; it is never read from files.
 */
struct AuctionRecord {
  std::string impression_id;
  double ectr = 0.0;  // predicted click-through rate, in (0, 1]
  double bid = 0.0;   // cost-per-click bid, > 0
  int click = 0;      // observed click, 0 or 1
  double y = 0.0;     // revenue label, click * bid
};

inline void validate_record(const AuctionRecord& rec, const std::string& where) {
  const std::string prefix = where.empty() ? std::string() : where + ": ";
  if (!(rec.ectr > 0.0 && rec.ectr <= 1.0) || !std::isfinite(rec.ectr)) {
    throw ValidationError(prefix + "ectr out of (0,1] (got " + std::to_string(rec.ectr) + ")");
  }
  if (!(rec.bid > 0.0) || !std::isfinite(rec.bid)) {
    throw ValidationError(prefix + "bid must be > 0 (got " + std::to_string(rec.bid) + ")");
  }
  if (rec.click != 0 && rec.click != 1) {
    throw ValidationError(prefix + "click must be 0 or 1 (got " + std::to_string(rec.click) + ")");
  }
}

/*! \brief Build a validated record; y is derived from click and bid. */
inline AuctionRecord make_record(std::string impression_id, double ectr, double bid, int click,
                                 const std::string& where = std::string()) {
  AuctionRecord rec{std::move(impression_id), ectr, bid, click, 0.0};
  validate_record(rec, where);
  rec.y = click ? bid : 0.0;
  return rec;
}

/*! \brief Indices of the records shown together in one auction, in file order. */
struct ImpressionList {
  std::string impression_id;
  std::vector<std::size_t> record_indices;
};

/*!
 * \brief A pooled list of records plus their grouping into impressions.
 *
 * Records keep file order in pooled(); impressions() keeps first-seen order
 * of impression ids. Records with no impression id share one group.
 */
class Dataset {
 public:
  void add(AuctionRecord rec) {
    validate_record(rec, std::string());
    rec.y = rec.click ? rec.bid : 0.0;
    const std::size_t idx = pooled_.size();
    auto it = group_of_.find(rec.impression_id);
    if (it == group_of_.end()) {
      group_of_.emplace(rec.impression_id, impressions_.size());
      impressions_.push_back(ImpressionList{rec.impression_id, {idx}});
    } else {
      impressions_[it->second].record_indices.push_back(idx);
    }
    pooled_.push_back(std::move(rec));
  }

  const std::vector<AuctionRecord>& pooled() const { return pooled_; }
  const std::vector<ImpressionList>& impressions() const { return impressions_; }

  std::size_t size() const { return pooled_.size(); }
  bool empty() const { return pooled_.empty(); }

  const AuctionRecord& record(std::size_t i) const { return pooled_[i]; }

 private:
  std::vector<AuctionRecord> pooled_;
  std::vector<ImpressionList> impressions_;
  std::unordered_map<std::string, std::size_t> group_of_;
};

}  // namespace revrank

#endif  // REVRANK_DATASET_HPP_
