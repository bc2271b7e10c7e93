#include "contregime/timegrid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "contregime/errors.hpp"
#include "contregime/format.hpp"

namespace contregime {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  // shortest text that parses back to the same double
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Partition::Partition(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) {
    throw InvalidArgument("partition needs at least two points");
  }
  if (times_.front() != 0.0) {
    throw InvalidArgument("partition must start at 0");
  }
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1]) || !std::isfinite(times_[i])) {
      throw InvalidArgument("partition times must be finite and strictly increasing");
    }
    mesh_ = std::max(mesh_, times_[i] - times_[i - 1]);
  }
}

std::optional<std::size_t> Partition::find(double t) const {
  const double tol = 1e-9 * horizon();
  auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
  if (it != times_.end() && std::abs(*it - t) <= tol) {
    return static_cast<std::size_t>(it - times_.begin());
  }
  return std::nullopt;
}

Partition make_partition(double horizon, std::size_t steps, PartitionScheme scheme) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw InvalidArgument("horizon must be positive and finite");
  }
  if (steps == 0) throw InvalidArgument("partition needs K >= 1");
  std::vector<double> times(steps + 1);
  switch (scheme) {
    case PartitionScheme::uniform:
      for (std::size_t i = 0; i < steps; ++i) {
        times[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
      }
      times[steps] = horizon;
      break;
  }
  return Partition(std::move(times));
}

Partition refine(const Partition& p) {
  std::vector<double> times;
  times.reserve(2 * p.size() - 1);
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    times.push_back(p[i]);
    times.push_back(0.5 * (p[i] + p[i + 1]));
  }
  times.push_back(p.horizon());
  return Partition(std::move(times));
}

std::vector<std::size_t> subgrid_indices(const Partition& coarse, const Partition& fine) {
  const double tol = 1e-9 * fine.horizon();
  if (std::abs(coarse.horizon() - fine.horizon()) > tol) {
    throw InvalidArgument("decision partition horizon differs from the simulation grid");
  }
  std::vector<std::size_t> idx;
  idx.reserve(coarse.size());
  for (double t : coarse.times()) {
    auto j = fine.find(t);
    if (!j) {
      throw InvalidArgument("decision time " + format_double(t) +
                            " is not a point of the simulation grid");
    }
    idx.push_back(*j);
  }
  return idx;
}

std::size_t Trajectory::exit_index() const {
  const double x = exit_time();
  if (!(x < kInfinity)) return grid->size();
  auto j = grid->find(x);
  if (!j) throw InvalidArgument("exit time is not a grid point");
  return *j;
}

void validate(const Trajectory& tr) {
  if (!tr.grid) throw InvalidArgument("trajectory has no grid");
  const std::size_t m = tr.grid->size();
  if (tr.treatment.size() != m * tr.treatment_dim ||
      tr.covariate.size() != m * tr.covariate_dim) {
    throw InvalidArgument("trajectory sequences do not match the grid length");
  }
  if (tr.died() && tr.censored()) {
    throw InvalidArgument("censor time must be +inf when the event precedes censoring");
  }
  const std::size_t x = tr.exit_index();
  for (std::size_t j = x + 1; j < m; ++j) {
    if (!std::ranges::equal(tr.treatment_at(j), tr.treatment_at(x)) ||
        !std::ranges::equal(tr.covariate_at(j), tr.covariate_at(x))) {
      throw InvalidArgument("values after the exit time must equal the value at exit");
    }
  }
}

std::vector<double> summarize(SummaryMap map, const HistoryView& view) {
  std::vector<double> s;
  switch (map) {
    case SummaryMap::last_value: {
      const std::size_t q = view.covariate_dim;
      const auto& cov = view.past_covariates;
      s.assign(cov.end() - static_cast<std::ptrdiff_t>(q), cov.end());
      if (view.current_treatment) {
        s.insert(s.end(), view.current_treatment->begin(), view.current_treatment->end());
      }
      break;
    }
  }
  return s;
}

HistoryView history_at(const Trajectory& tr, std::size_t j, bool with_current, SummaryMap map) {
  if (!tr.grid || j >= tr.grid->size()) {
    throw InvalidArgument("history index out of range");
  }
  HistoryView v;
  v.upto_index = j;
  v.treatment_dim = tr.treatment_dim;
  v.covariate_dim = tr.covariate_dim;
  v.past_treatments.assign(tr.treatment.begin(),
                           tr.treatment.begin() + static_cast<std::ptrdiff_t>(j * tr.treatment_dim));
  v.past_covariates.assign(
      tr.covariate.begin(),
      tr.covariate.begin() + static_cast<std::ptrdiff_t>((j + 1) * tr.covariate_dim));
  if (with_current) {
    auto a = tr.treatment_at(j);
    v.current_treatment.emplace(a.begin(), a.end());
  }
  v.summary = summarize(map, v);
  return v;
}

void write_cohort_csv(std::ostream& out, const Cohort& cohort) {
  const std::size_t p = cohort.empty() ? 1 : cohort.front().treatment_dim;
  const std::size_t q = cohort.empty() ? 1 : cohort.front().covariate_dim;
  out << "subject_id,t";
  for (std::size_t k = 1; k <= p; ++k) out << ",a_" << k;
  for (std::size_t k = 1; k <= q; ++k) out << ",l_" << k;
  out << ",event_time,censor_time,outcome\n";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const Trajectory& tr = cohort[i];
    const std::string tail = "," + format_double(tr.event_time) + "," +
                             format_double(tr.censor_time) + "," + format_double(tr.outcome);
    for (std::size_t j = 0; j < tr.grid->size(); ++j) {
      out << i << ',' << format_double((*tr.grid)[j]);
      for (double a : tr.treatment_at(j)) out << ',' << format_double(a);
      for (double l : tr.covariate_at(j)) out << ',' << format_double(l);
      out << tail << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double parse_cell(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw InvalidArgument("cohort csv line " + std::to_string(line_no) +
                          ": cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

Cohort read_cohort_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("cohort csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  std::size_t p = 0, q = 0;
  for (const auto& h : header) {
    if (h.rfind("a_", 0) == 0) ++p;
    if (h.rfind("l_", 0) == 0) ++q;
  }
  if (header.size() != p + q + 5 || header[0] != "subject_id" || header[1] != "t" || p == 0 ||
      q == 0) {
    throw InvalidArgument("cohort csv header does not match the trajectory schema");
  }

  struct Rows {
    std::string id;
    std::vector<double> t, a, l;
    double event = kInfinity, censor = kInfinity, outcome = 0.0;
  };
  std::vector<Rows> subjects;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw InvalidArgument("cohort csv line " + std::to_string(line_no) + ": wrong column count");
    }
    if (subjects.empty() || subjects.back().id != cells[0]) {
      subjects.push_back(Rows{cells[0], {}, {}, {}});
    }
    Rows& r = subjects.back();
    r.t.push_back(parse_cell(cells[1], line_no));
    for (std::size_t k = 0; k < p; ++k) r.a.push_back(parse_cell(cells[2 + k], line_no));
    for (std::size_t k = 0; k < q; ++k) r.l.push_back(parse_cell(cells[2 + p + k], line_no));
    r.event = parse_cell(cells[2 + p + q], line_no);
    r.censor = parse_cell(cells[3 + p + q], line_no);
    r.outcome = parse_cell(cells[4 + p + q], line_no);
  }

  Cohort cohort;
  cohort.reserve(subjects.size());
  std::shared_ptr<const Partition> shared;
  for (auto& r : subjects) {
    if (!shared || !std::ranges::equal(shared->times(), r.t)) {
      shared = std::make_shared<const Partition>(r.t);
    }
    Trajectory tr;
    tr.grid = shared;
    tr.treatment_dim = p;
    tr.covariate_dim = q;
    tr.treatment = std::move(r.a);
    tr.covariate = std::move(r.l);
    tr.event_time = r.event;
    tr.censor_time = r.censor;
    tr.outcome = r.outcome;
    validate(tr);
    cohort.push_back(std::move(tr));
  }
  return cohort;
}

}  // namespace contregime
