// Copyright 2026 The vdlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vdlab/replay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vdl {

void Episode::validate() const {
  VDL_CONTRACT(!actions.empty(), "episode: no transitions");
  VDL_CONTRACT(states.size() == actions.size() + 1 && achieved.size() == actions.size() + 1,
               "episode: expected L+1 states and achieved goals for L actions");
  VDL_CONTRACT(goal.size() > 0, "episode: missing intended goal");
}

const char* role_name(BufferRole r) { return r == BufferRole::kLong ? "long" : "short"; }

ReplayBuffer::ReplayBuffer(std::size_t capacity, BufferRole role) : capacity_(capacity), role_(role) {
  VDL_REQUIRE(capacity > 0, ErrorCode::kConfig, "replay: capacity must be positive");
}

void ReplayBuffer::push(Episode ep) {
  ep.validate();
  VDL_CONTRACT(ep.size() <= capacity_, "replay: episode longer than buffer capacity");
  while (count_ + ep.size() > capacity_) {
    count_ -= episodes_.front().size();
    episodes_.pop_front();
  }
  count_ += ep.size();
  episodes_.push_back(std::move(ep));
  ends_.clear();
  std::size_t acc = 0;
  for (const Episode& e : episodes_) ends_.push_back(acc += e.size());
}

std::pair<std::size_t, std::size_t> ReplayBuffer::locate(std::size_t i) const {
  VDL_CONTRACT(i < count_, "replay: transition index out of range");
  const auto it = std::upper_bound(ends_.begin(), ends_.end(), i);
  const auto e = static_cast<std::size_t>(it - ends_.begin());
  const std::size_t begin = e == 0 ? 0 : ends_[e - 1];
  return {e, i - begin};
}

Transition ReplayBuffer::transition(std::size_t e, std::size_t t) const {
  const Episode& ep = episodes_[e];
  Transition tr;
  tr.s = ep.states[t];
  tr.a = ep.actions[t];
  tr.s2 = ep.states[t + 1];
  tr.achieved = ep.achieved[t];
  tr.goal = ep.goal;
  tr.terminal = ep.terminal && t + 1 == ep.size();
  return tr;
}

std::vector<Transition> ReplayBuffer::sample_transitions(std::size_t batch, Rng& rng) const {
  std::vector<Transition> out;
  if (batch == 0) return out;
  VDL_CONTRACT(count_ > 0, "replay: sampling from an empty buffer");
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto [e, t] = locate(rng.index(count_));
    out.push_back(transition(e, t));
  }
  return out;
}

HindsightSample ReplayBuffer::sample_geometric_goal(double gamma, int T, Rng& rng) const {
  VDL_CONTRACT(count_ > 0, "replay: sampling from an empty buffer");
  VDL_CONTRACT(gamma >= 0.0 && gamma < 1.0, "replay: gamma must be in [0, 1)");
  VDL_CONTRACT(T >= 0, "replay: truncation must be non-negative");
  const auto [e, t] = locate(rng.index(count_));
  const Episode& ep = episodes_[e];
  const std::size_t remaining = ep.size() - t;
  const std::size_t cap =
      ep.terminal ? static_cast<std::size_t>(T) : std::min(static_cast<std::size_t>(T), remaining);
  std::size_t j = 0;
  if (gamma > 0.0) {
    const double log_gamma = std::log(gamma);
    do {
      // Inverse-CDF draw of Geom(1 - gamma) on {0, 1, ...}.
      const double u = 1.0 - rng.uniform();  // (0, 1]
      const double x = std::floor(std::log(u) / log_gamma);
      j = x > static_cast<double>(cap) ? cap + 1 : static_cast<std::size_t>(x);
    } while (j > cap);
  }
  HindsightSample hs;
  hs.s = ep.states[t];
  hs.a = ep.actions[t];
  hs.intended = ep.goal;
  hs.goal = ep.achieved[std::min(t + j, ep.size())];
  hs.offset = static_cast<int>(j);
  hs.episode = e;
  hs.t = t;
  return hs;
}

void ReplayBuffer::require_role(BufferRole r, const char* reader) const {
  VDL_CONTRACT(role_ == r, std::string(reader) + " must read the " + role_name(r) + " buffer, got the " +
                               role_name(role_) + " buffer");
}

Transition her_relabel(const Episode& ep, std::size_t t, RelabelStrategy strategy,
                       const GoalReward& reward, Rng& rng) {
  VDL_CONTRACT(t < ep.size(), "her_relabel: step out of range");
  Transition tr;
  tr.s = ep.states[t];
  tr.a = ep.actions[t];
  tr.s2 = ep.states[t + 1];
  tr.achieved = ep.achieved[t];
  tr.terminal = ep.terminal && t + 1 == ep.size();
  if (strategy == RelabelStrategy::kFinal) {
    tr.goal = ep.achieved[ep.size() - 1];
  } else {
    const std::size_t k = t + 1 + rng.index(ep.size() - t);
    tr.goal = ep.achieved[k];
  }
  tr.reward = reward(tr.achieved, tr.goal);
  return tr;
}

std::vector<Transition> sample_her_batch(const ReplayBuffer& buf, std::size_t batch, int k,
                                         RelabelStrategy strategy, const GoalReward& reward,
                                         Rng& rng) {
  VDL_CONTRACT(k >= 0, "sample_her_batch: negative relabel count");
  std::vector<Transition> out;
  if (batch == 0) return out;
  VDL_CONTRACT(!buf.empty(), "replay: sampling from an empty buffer");
  const double p_relabel = static_cast<double>(k) / (k + 1.0);
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto [e, t] = buf.locate(rng.index(buf.transitions()));
    if (rng.uniform() < p_relabel) {
      out.push_back(her_relabel(buf.episode(e), t, strategy, reward, rng));
    } else {
      Transition tr = buf.transition(e, t);
      tr.reward = reward(tr.achieved, tr.goal);
      out.push_back(std::move(tr));
    }
  }
  return out;
}

}  // namespace vdl
