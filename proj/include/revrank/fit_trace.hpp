#ifndef REVRANK_FIT_TRACE_HPP_
#define REVRANK_FIT_TRACE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "revrank/dataset_io.hpp"

namespace revrank {

/*!
 * \brief One logged optimization step. param is the headline parameter of the
 *        fit (beta for the explicit ranker, weight L2 norm for the MLP) and
 *        objective is the exact metric value named by metric.
 */
struct FitTracePoint {
  std::int64_t step = 0;
  double param = 0.0;
  double objective = 0.0;
  std::string metric;
};

struct FitTrace {
  std::vector<FitTracePoint> points;

  void write_csv(const std::string& path) const {
    std::string out = "step,param,objective,metric\n";
    for (const auto& p : points) {
      out += std::to_string(p.step);
      out += ',';
      out += detail::format_double(p.param);
      out += ',';
      out += detail::format_double(p.objective);
      out += ',';
      out += p.metric;
      out += '\n';
    }
    detail::write_file(path, out);
  }
};

}  // namespace revrank

#endif  // REVRANK_FIT_TRACE_HPP_
