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

#pragma once

// Episodic replay with long/short role tags, geometric hindsight goals and
// HER relabeling.

#include "vdlab/numcore.hpp"

#include <deque>
#include <functional>
#include <limits>
#include <vector>

namespace vdl {

// states[0..L], actions[0..L-1], achieved[0..L] with achieved[t] = h(s_t, a_t)
// and achieved[L] the goal projection of the final state. `terminal` means
// the final state is absorbing, so achieved[L] repeats forever.
struct Episode {
  std::vector<Vec> states;
  std::vector<Vec> actions;
  std::vector<Vec> achieved;
  Vec goal;  // intended goal for the whole rollout
  bool terminal = false;

  std::size_t size() const { return actions.size(); }
  void validate() const;
};

struct Transition {
  Vec s, a, s2;
  Vec achieved;  // h(s, a)
  Vec goal;
  double reward = 0.0;
  bool terminal = false;  // s2 is absorbing
};

struct HindsightSample {
  Vec s, a;
  Vec intended;
  Vec goal;
  int offset = 0;
  std::size_t episode = 0;
  std::size_t t = 0;
};

enum class BufferRole { kLong, kShort };
const char* role_name(BufferRole r);

inline constexpr int kUntruncated = std::numeric_limits<int>::max();

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, BufferRole role);

  BufferRole role() const { return role_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t transitions() const { return count_; }
  std::size_t episodes() const { return episodes_.size(); }
  bool empty() const { return count_ == 0; }
  const Episode& episode(std::size_t i) const { return episodes_[i]; }

  // Oldest episodes are evicted until the new one fits. An episode longer
  // than the capacity is rejected.
  void push(Episode ep);

  // (episode index, step) of the i-th stored transition, oldest first.
  std::pair<std::size_t, std::size_t> locate(std::size_t i) const;

  Transition transition(std::size_t episode, std::size_t t) const;
  std::vector<Transition> sample_transitions(std::size_t batch, Rng& rng) const;

  // Uniform transition, then j with P(j) = (1-gamma) gamma^j resampled until
  // j <= min(T, steps remaining); terminal episodes extend past their end.
  HindsightSample sample_geometric_goal(double gamma, int T, Rng& rng) const;

  void require_role(BufferRole r, const char* reader) const;

 private:
  std::size_t capacity_;
  BufferRole role_;
  std::deque<Episode> episodes_;
  std::vector<std::size_t> ends_;  // cumulative transition counts
  std::size_t count_ = 0;
};

// Goal-reached predicate plus the (1-gamma) reward scale.
struct GoalReward {
  double gamma = 0.98;
  std::function<bool(const Vec& achieved, const Vec& goal)> reached;
  double operator()(const Vec& achieved, const Vec& goal) const {
    return reached(achieved, goal) ? 1.0 - gamma : 0.0;
  }
};

enum class RelabelStrategy { kFuture, kFinal };

// future: goal = achieved[k] for k uniform in {t+1, ..., L};
// final:  goal = achieved goal of the episode's last transition.
Transition her_relabel(const Episode& ep, std::size_t t, RelabelStrategy strategy,
                       const GoalReward& reward, Rng& rng);

// Uniform transitions; each is relabeled with probability k/(k+1). Rewards
// are recomputed for every sample.
std::vector<Transition> sample_her_batch(const ReplayBuffer& buf, std::size_t batch, int k,
                                         RelabelStrategy strategy, const GoalReward& reward,
                                         Rng& rng);

}  // namespace vdl
