#include "mtal/sharing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>

#include "mtal/errors.hpp"
#include "mtal/ops.hpp"

namespace mtal {
namespace {

template <typename T>
BasicTensor<T> convex_combination(const BasicTensor<T>& a, const BasicTensor<T>& b, double phi) {
  BasicTensor<T> out(a.shape());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double x = a[k];
    const double y = b[k];
    const double v = phi * x + (1.0 - phi) * y;
    out[k] = static_cast<T>(std::clamp(v, std::min(x, y), std::max(x, y)));
  }
  return out;
}

template <typename T>
void check_pair(const Var<T>& w_i, const Var<T>& w_j) {
  if (w_i->shape() != w_j->shape()) {
    throw ShapeError("aggregate_pair: kernel shapes " + to_string(w_i->shape()) + " and " +
                     to_string(w_j->shape()) + " differ");
  }
}

std::string where(std::size_t layer, std::size_t task, std::size_t kernel) {
  return "layer " + std::to_string(layer) + " task " + std::to_string(task) + " kernel " +
         std::to_string(kernel);
}

}  // namespace

PhiKey phi_key(const SimilarityRecord& r) {
  return {r.layer, r.task_i, r.kernel_p, r.task_j, r.kernel_q};
}

double phi_from_raw(double rho) { return 1.0 / (1.0 + std::exp(-rho)); }

template <typename T>
Var<T> PhiStore<T>::raw(const PhiKey& key) {
  auto [it, inserted] = raw_.try_emplace(key);
  if (inserted) it->second = parameter(BasicTensor<T>(Shape{1}, T{0}));
  return it->second;
}

template <typename T>
std::vector<Var<T>> PhiStore<T>::parameters() const {
  std::vector<Var<T>> out;
  out.reserve(raw_.size());
  for (const auto& [key, v] : raw_) out.push_back(v);
  return out;
}

template <typename T>
SharingPlan<T> make_plan(std::size_t layer, std::span<const SimilarityRecord> records,
                         PhiMode mode, PhiStore<T>& store, double fixed_phi) {
  if (!(fixed_phi >= 0.0 && fixed_phi <= 1.0)) {
    throw ConfigError("fixed phi must lie in [0, 1], got " + std::to_string(fixed_phi));
  }
  SharingPlan<T> plan{layer, {}};
  plan.entries.reserve(records.size());
  for (const auto& r : records) {
    if (r.layer != layer) {
      throw std::invalid_argument("make_plan: record for layer " + std::to_string(r.layer) +
                                  " in plan for layer " + std::to_string(layer));
    }
    PlanEntry<T> e{r, nullptr, fixed_phi};
    if (mode == PhiMode::Learnable) e.rho = store.raw(phi_key(r));
    plan.entries.push_back(std::move(e));
  }
  return plan;
}

template <typename T>
Var<T> aggregate_pair(const Var<T>& w_i, const Var<T>& w_j, double phi) {
  check_pair(w_i, w_j);
  if (!(phi >= 0.0 && phi <= 1.0)) {
    throw std::invalid_argument("aggregate_pair: phi must lie in [0, 1], got " +
                                std::to_string(phi));
  }
  return make_op<T>(convex_combination(w_i->value(), w_j->value(), phi), "aggregate_pair",
                    {w_i, w_j}, [phi](Node<T>& self) {
                      auto go = self.grad().data();
                      const double weights[2] = {phi, 1.0 - phi};
                      for (int s = 0; s < 2; ++s) {
                        const auto& p = self.parents()[s];
                        if (!p->requires_grad()) continue;
                        auto g = p->grad_buffer().data();
                        for (std::size_t k = 0; k < g.size(); ++k) {
                          g[k] += static_cast<T>(weights[s] * go[k]);
                        }
                      }
                    });
}

template <typename T>
Var<T> aggregate_pair(const Var<T>& w_i, const Var<T>& w_j, const Var<T>& rho) {
  check_pair(w_i, w_j);
  if (rho->value().size() != 1) {
    throw ShapeError("aggregate_pair: rho must hold one value, got " + to_string(rho->shape()));
  }
  const double phi = phi_from_raw(rho->value()[0]);
  return make_op<T>(
      convex_combination(w_i->value(), w_j->value(), phi), "aggregate_pair_learnable",
      {w_i, w_j, rho}, [phi](Node<T>& self) {
        const auto& ps = self.parents();
        auto go = self.grad().data();
        const double weights[2] = {phi, 1.0 - phi};
        for (int s = 0; s < 2; ++s) {
          if (!ps[s]->requires_grad()) continue;
          auto g = ps[s]->grad_buffer().data();
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += static_cast<T>(weights[s] * go[k]);
        }
        if (ps[2]->requires_grad()) {
          auto a = ps[0]->value().data();
          auto b = ps[1]->value().data();
          double s = 0.0;
          for (std::size_t k = 0; k < go.size(); ++k) {
            s += static_cast<double>(go[k]) * (static_cast<double>(a[k]) - b[k]);
          }
          ps[2]->grad_buffer()[0] += static_cast<T>(s * phi * (1.0 - phi));
        }
      });
}

template <typename T>
Var<T> bank_average(std::span<const Var<T>> members) {
  if (members.empty()) throw std::invalid_argument("bank_average: empty kernel bank");
  const Shape& shape = members[0]->shape();
  std::vector<double> acc(members[0]->value().size(), 0.0);
  for (const auto& m : members) {
    if (m->shape() != shape) {
      throw ShapeError("bank_average: member shapes " + to_string(shape) + " and " +
                       to_string(m->shape()) + " differ");
    }
    auto v = m->value().data();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
  }
  const double count = static_cast<double>(members.size());
  BasicTensor<T> out(shape);
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<T>(acc[k] / count);
  return make_op<T>(std::move(out), "bank_average", {members.begin(), members.end()},
                    [count](Node<T>& self) {
                      auto go = self.grad().data();
                      for (const auto& p : self.parents()) {
                        if (!p->requires_grad()) continue;
                        auto g = p->grad_buffer().data();
                        for (std::size_t k = 0; k < g.size(); ++k) {
                          g[k] += static_cast<T>(go[k] / count);
                        }
                      }
                    });
}

template <typename T>
std::vector<KernelBank<T>> build_banks(std::span<const Var<T>> raw_kernels,
                                       const SharingPlan<T>& plan) {
  const std::size_t tasks = raw_kernels.size();
  std::map<std::pair<std::size_t, std::size_t>, KernelBank<T>> banks;
  for (const auto& e : plan.entries) {
    const auto& r = e.record;
    if (r.task_i >= tasks || r.task_j >= tasks || r.task_i == r.task_j) {
      throw std::out_of_range("apply_sharing: entry (" + where(r.layer, r.task_i, r.kernel_p) +
                              ") -> task " + std::to_string(r.task_j) + " kernel " +
                              std::to_string(r.kernel_q) + " references invalid tasks for " +
                              std::to_string(tasks) + " networks");
    }
    const std::size_t m = raw_kernels[r.task_i]->shape().at(0);
    if (r.kernel_p >= m || r.kernel_q >= raw_kernels[r.task_j]->shape().at(0)) {
      throw std::out_of_range("apply_sharing: entry (" + where(r.layer, r.task_i, r.kernel_p) +
                              ") -> kernel " + std::to_string(r.kernel_q) + " exceeds " +
                              std::to_string(m) + " kernels");
    }
    auto own = select(raw_kernels[r.task_i], r.kernel_p);
    auto partner = select(raw_kernels[r.task_j], r.kernel_q);
    auto merged = e.rho ? aggregate_pair(own, partner, e.rho)
                        : aggregate_pair(own, partner, e.fixed_phi);
    auto& bank = banks[{r.task_i, r.kernel_p}];
    bank.layer = plan.layer;
    bank.task = r.task_i;
    bank.kernel = r.kernel_p;
    bank.members.push_back(std::move(merged));
  }
  std::vector<KernelBank<T>> out;
  out.reserve(banks.size());
  for (auto& [key, bank] : banks) out.push_back(std::move(bank));
  return out;
}

template <typename T>
std::vector<Var<T>> apply_sharing(std::span<const Var<T>> raw_kernels,
                                  const SharingPlan<T>& plan) {
  std::vector<Var<T>> effective(raw_kernels.begin(), raw_kernels.end());
  const auto banks = build_banks(raw_kernels, plan);
  std::size_t b = 0;
  while (b < banks.size()) {
    const std::size_t task = banks[b].task;
    const std::size_t m = raw_kernels[task]->shape()[0];
    std::vector<Var<T>> parts;
    parts.reserve(m);
    for (std::size_t p = 0; p < m; ++p) {
      if (b < banks.size() && banks[b].task == task && banks[b].kernel == p) {
        parts.push_back(bank_average(banks[b]));
        ++b;
      } else {
        parts.push_back(select(raw_kernels[task], p));
      }
    }
    effective[task] = stack<T>(parts);
  }
  return effective;
}

double SharingReport::layer_ratio(std::size_t layer) const {
  return total.at(layer) == 0 ? 0.0
                              : static_cast<double>(shared.at(layer)) /
                                    static_cast<double>(total.at(layer));
}

double SharingReport::total_ratio() const {
  return kernel_total == 0 ? 0.0
                           : static_cast<double>(shared_total) / static_cast<double>(kernel_total);
}

SharingReport sharing_report(std::span<const std::vector<SimilarityRecord>> records_per_layer,
                             std::size_t tasks, std::span<const std::size_t> kernels_per_layer) {
  if (records_per_layer.size() > kernels_per_layer.size()) {
    throw std::invalid_argument("sharing_report: more record layers than network layers");
  }
  SharingReport report;
  for (std::size_t l = 0; l < kernels_per_layer.size(); ++l) {
    std::set<std::pair<std::size_t, std::size_t>> members;
    if (l < records_per_layer.size()) {
      for (const auto& r : records_per_layer[l]) {
        members.emplace(r.task_i, r.kernel_p);
        members.emplace(r.task_j, r.kernel_q);
      }
    }
    report.shared.push_back(members.size());
    report.total.push_back(tasks * kernels_per_layer[l]);
    report.shared_total += members.size();
    report.kernel_total += tasks * kernels_per_layer[l];
  }
  return report;
}

template <typename T>
SharingReport sharing_report(std::span<const SharingPlan<T>> plans, std::size_t tasks,
                             std::span<const std::size_t> kernels_per_layer) {
  std::vector<std::vector<SimilarityRecord>> records(kernels_per_layer.size());
  for (const auto& plan : plans) {
    if (plan.layer >= records.size()) {
      throw std::out_of_range("sharing_report: plan for layer " + std::to_string(plan.layer) +
                              " beyond " + std::to_string(records.size()) + " layers");
    }
    for (const auto& e : plan.entries) records[plan.layer].push_back(e.record);
  }
  return sharing_report(std::span<const std::vector<SimilarityRecord>>(records), tasks,
                        kernels_per_layer);
}

void write_sharing_report_csv(std::ostream& out, const SharingReport& report) {
  char buf[64];
  out << "layer,ratio_percent\n";
  for (std::size_t l = 0; l < report.shared.size(); ++l) {
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * report.layer_ratio(l));
    out << "conv" << (l + 1) << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * report.total_ratio());
  out << "total," << buf << '\n';
}

#define MTAL_INSTANTIATE(T)                                                                     \
  template class PhiStore<T>;                                                                   \
  template SharingPlan<T> make_plan(std::size_t, std::span<const SimilarityRecord>, PhiMode,    \
                                    PhiStore<T>&, double);                                      \
  template Var<T> aggregate_pair(const Var<T>&, const Var<T>&, double);                         \
  template Var<T> aggregate_pair(const Var<T>&, const Var<T>&, const Var<T>&);                  \
  template Var<T> bank_average(std::span<const Var<T>>);                                        \
  template std::vector<KernelBank<T>> build_banks(std::span<const Var<T>>, const SharingPlan<T>&); \
  template std::vector<Var<T>> apply_sharing(std::span<const Var<T>>, const SharingPlan<T>&);   \
  template SharingReport sharing_report(std::span<const SharingPlan<T>>, std::size_t,           \
                                        std::span<const std::size_t>);

MTAL_INSTANTIATE(float)
MTAL_INSTANTIATE(double)
#undef MTAL_INSTANTIATE

}  // namespace mtal
