#include "sdil/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <queue>

namespace sdil::grid {

namespace {

constexpr int kDeltaRow[4] = {-1, 1, 0, 0};
constexpr int kDeltaCol[4] = {0, 0, -1, 1};

int delta_action(Cell from, Cell to) {
    for (int a = 0; a < 4; ++a) {
        if (from.row + kDeltaRow[a] == to.row && from.col + kDeltaCol[a] == to.col) return a;
    }
    throw GenerationError("path cells are not adjacent");
}

// BFS over grid cells with a caller-supplied blocked predicate. Neighbor
// expansion order is fixed (Up, Down, Left, Right) so paths are
// deterministic. Returns the cell path including both endpoints.
std::optional<std::vector<Cell>> bfs_cells(const Env& env, Cell from, Cell to,
                                           const std::function<bool(Cell)>& blocked) {
    if (from == to) return std::vector<Cell>{from};
    const int n = env.width() * env.height();
    std::vector<int> parent(n, -2);
    parent[env.cell_index(from)] = -1;
    std::deque<Cell> queue{from};
    while (!queue.empty()) {
        Cell c = queue.front();
        queue.pop_front();
        for (int a = 0; a < 4; ++a) {
            Cell nc{c.row + kDeltaRow[a], c.col + kDeltaCol[a]};
            if (!env.in_bounds(nc) || blocked(nc)) continue;
            int idx = env.cell_index(nc);
            if (parent[idx] != -2) continue;
            parent[idx] = env.cell_index(c);
            if (nc == to) {
                std::vector<Cell> path{nc};
                int cur = env.cell_index(c);
                while (cur != -1) {
                    path.push_back({cur / env.width(), cur % env.width()});
                    cur = parent[cur];
                }
                std::reverse(path.begin(), path.end());
                return path;
            }
            queue.push_back(nc);
        }
    }
    return std::nullopt;
}

// Applies a scripted action sequence to build a Trajectory.
struct EpisodeBuilder {
    const Env& env;
    State state;
    int steps = 0;
    bool done = false;
    Trajectory traj;

    EpisodeBuilder(const Env& e, Cell start, int id, bool clean) : env(e) {
        state = env.initial_state(start);
        traj.id = id;
        traj.clean = clean;
    }

    void apply(int action) {
        SDIL_REQUIRE(!done, "episode already finished");
        traj.steps.push_back({env.features(state), action});
        StepResult r = env.step(state, action, ++steps);
        state = r.next;
        if (r.done) {
            done = true;
            traj.reward = r.reward;
            traj.outcome = (state.agent == env.goal()) ? TrajOutcome::ReachedGoal
                                                       : TrajOutcome::Timeout;
        }
    }

    Trajectory finish() {
        if (!done) {
            traj.outcome = TrajOutcome::Elsewhere;
            traj.reward = 0.0f;
        }
        return std::move(traj);
    }

    void follow(const std::vector<Cell>& path) {
        for (std::size_t i = 0; i + 1 < path.size(); ++i)
            apply(delta_action(path[i], path[i + 1]));
    }
};

} // namespace

Env Env::four_room(int size, Cell goal, int max_steps) {
    SDIL_REQUIRE(size >= 5 && size % 2 == 1, "four_room: size must be odd and >= 5");
    Env env;
    env.kind_ = EnvKind::FourRoom;
    env.width_ = env.height_ = size;
    env.n_actions_ = 4;
    env.max_steps_ = max_steps;
    env.goal_ = goal;
    env.walls_.assign(static_cast<std::size_t>(size) * size, false);
    const int mid = size / 2;
    for (int i = 0; i < size; ++i) {
        env.walls_[env.cell_index({i, mid})] = true;
        env.walls_[env.cell_index({mid, i})] = true;
    }
    // One gap per wall arm, centered in each half.
    const int lo = mid / 2, hi = mid + 1 + mid / 2;
    env.walls_[env.cell_index({lo, mid})] = false;
    env.walls_[env.cell_index({hi, mid})] = false;
    env.walls_[env.cell_index({mid, lo})] = false;
    env.walls_[env.cell_index({mid, hi})] = false;
    SDIL_REQUIRE(!env.is_wall(goal), "four_room: goal is inside a wall");
    env.finalize();
    return env;
}

Env Env::door_key(int size, int max_steps) {
    SDIL_REQUIRE(size >= 5 && size % 2 == 1, "door_key: size must be odd and >= 5");
    Env env;
    env.kind_ = EnvKind::DoorKey;
    env.width_ = env.height_ = size;
    env.n_actions_ = 6;
    env.max_steps_ = max_steps;
    const int mid = size / 2;
    env.goal_ = {size - 2, size - 2};
    env.key_ = {2, 2};
    env.door_ = {mid, mid};
    env.walls_.assign(static_cast<std::size_t>(size) * size, false);
    for (int i = 0; i < size; ++i) env.walls_[env.cell_index({i, mid})] = true;
    env.walls_[env.cell_index(env.door_)] = false; // door cell, passable when open
    env.finalize();
    return env;
}

Env Env::open_room(int width, int height, Cell goal, int max_steps) {
    Env env;
    env.kind_ = EnvKind::OpenRoom;
    env.width_ = width;
    env.height_ = height;
    env.n_actions_ = 4;
    env.max_steps_ = max_steps;
    env.goal_ = goal;
    env.walls_.assign(static_cast<std::size_t>(width) * height, false);
    env.finalize();
    return env;
}

Env Env::by_name(const std::string& name) {
    if (name == "fourroom") return four_room();
    if (name == "doorkey") return door_key();
    throw ContractError("unknown env '" + name + "' (expected fourroom|doorkey)");
}

std::string Env::name() const {
    switch (kind_) {
        case EnvKind::FourRoom: return "fourroom";
        case EnvKind::DoorKey: return "doorkey";
        case EnvKind::OpenRoom: return "openroom";
    }
    return "unknown";
}

void Env::finalize() {
    start_cells_.clear();
    for (int r = 0; r < height_; ++r) {
        for (int c = 0; c < width_; ++c) {
            Cell cell{r, c};
            if (is_wall(cell) || cell == goal_) continue;
            if (kind_ == EnvKind::DoorKey) {
                if (cell.col >= door_.col) continue; // starts live in the key room
                if (cell == door_) continue;
            }
            start_cells_.push_back(cell);
        }
    }
    SDIL_REQUIRE(!start_cells_.empty(), "env has no start cells");

    // Goal must be reachable from every start cell.
    for (Cell s : start_cells_) {
        if (kind_ == EnvKind::DoorKey) {
            auto to_key = bfs_cells(*this, s, key_, [this](Cell c) {
                return is_wall(c) || (c == door_);
            });
            SDIL_REQUIRE(to_key.has_value(), "door_key: key not reachable");
        } else {
            auto p = bfs_cells(*this, s, goal_, [this](Cell c) { return is_wall(c); });
            SDIL_REQUIRE(p.has_value(), "goal not reachable from some start cell");
        }
    }
}

State Env::initial_state(Cell start) const {
    SDIL_REQUIRE(in_bounds(start) && !is_wall(start), "invalid start cell");
    return State{start, false, false};
}

Cell Env::sample_start(Rng& rng) const {
    return start_cells_[rng.index(start_cells_.size())];
}

bool Env::passable(Cell c, const State& s) const {
    if (!in_bounds(c) || is_wall(c)) return false;
    if (kind_ == EnvKind::DoorKey && c == door_ && !s.door_open) return false;
    return true;
}

StepResult Env::step(const State& state, int action, int steps_taken) const {
    SDIL_REQUIRE(action >= 0 && action < n_actions_, "action outside the action set");
    State next = state;
    if (action < 4) {
        Cell target{state.agent.row + kDeltaRow[action], state.agent.col + kDeltaCol[action]};
        if (passable(target, state)) next.agent = target;
    } else if (action == Pickup) {
        if (kind_ == EnvKind::DoorKey && state.agent == key_ && !state.has_key)
            next.has_key = true;
    } else if (action == Toggle) {
        if (kind_ == EnvKind::DoorKey && state.has_key && !state.door_open) {
            const bool adjacent =
                std::abs(state.agent.row - door_.row) + std::abs(state.agent.col - door_.col) == 1;
            if (adjacent) next.door_open = true;
        }
    }

    StepResult out;
    out.next = next;
    if (next.agent == goal_) {
        out.done = true;
        out.reward = static_cast<float>(
            100.0 * (1.0 - 0.9 * static_cast<double>(steps_taken) / max_steps_));
    } else if (steps_taken >= max_steps_) {
        out.done = true;
        out.reward = 0.0f;
    }
    return out;
}

std::vector<float> Env::features(const State& state) const {
    std::vector<float> f(static_cast<std::size_t>(state_dim()), 0.0f);
    const int cells = width_ * height_;
    f[static_cast<std::size_t>(cell_index(state.agent))] = 1.0f;
    f[static_cast<std::size_t>(cells + cell_index(goal_))] = 1.0f;
    f[static_cast<std::size_t>(2 * cells)] = state.has_key ? 1.0f : 0.0f;
    f[static_cast<std::size_t>(2 * cells + 1)] = state.door_open ? 1.0f : 0.0f;
    return f;
}

namespace {

// Scripted shortest route to `target`. For DoorKey targets beyond the door
// this plans start->key->door->target; `avoid_goal` blocks the goal cell so
// decoy routes can never terminate the episode.
Trajectory plan_to(const Env& env, Cell start, Cell target, int id, bool clean,
                   bool avoid_goal) {
    EpisodeBuilder ep(env, start, id, clean);
    auto blocked = [&](Cell c) {
        if (env.is_wall(c)) return true;
        if (avoid_goal && c == env.goal()) return true;
        return false;
    };

    const bool needs_door =
        env.kind() == EnvKind::DoorKey && target.col > env.door_cell().col;
    if (env.kind() == EnvKind::DoorKey && (needs_door || target == env.door_cell())) {
        auto door_blocked = [&](Cell c) { return blocked(c) || c == env.door_cell(); };
        auto to_key = bfs_cells(env, start, env.key_cell(), door_blocked);
        if (!to_key) throw GenerationError("no path to the key");
        ep.follow(*to_key);
        ep.apply(Pickup);
        Cell door_side{env.door_cell().row, env.door_cell().col - 1};
        auto to_door = bfs_cells(env, env.key_cell(), door_side, door_blocked);
        if (!to_door) throw GenerationError("no path to the door");
        ep.follow(*to_door);
        ep.apply(Toggle);
        auto through = bfs_cells(env, door_side, target, blocked);
        if (!through) throw GenerationError("no path beyond the door");
        ep.follow(*through);
    } else {
        auto door_blocked = [&](Cell c) {
            return blocked(c) || (env.kind() == EnvKind::DoorKey && c == env.door_cell());
        };
        auto path = bfs_cells(env, start, target, door_blocked);
        if (!path) throw GenerationError("target not reachable");
        ep.follow(*path);
    }
    return ep.finish();
}

} // namespace

Trajectory plan_expert(const Env& env, Cell start) {
    Trajectory traj = plan_to(env, start, env.goal(), /*id=*/0, /*clean=*/true,
                              /*avoid_goal=*/false);
    if (traj.outcome != TrajOutcome::ReachedGoal)
        throw GenerationError("expert plan failed to reach the goal");
    return traj;
}

Trajectory generate_noisy(const Env& env, Cell start, NoisyMode mode, Rng& rng) {
    if (mode == NoisyMode::DecoyGoal) {
        // Any non-goal, non-start free cell can serve as the decoy target.
        std::vector<Cell> candidates;
        for (int r = 0; r < env.height(); ++r) {
            for (int c = 0; c < env.width(); ++c) {
                Cell cell{r, c};
                if (env.is_wall(cell) || cell == env.goal() || cell == start) continue;
                if (env.kind() == EnvKind::DoorKey && cell == env.door_cell()) continue;
                candidates.push_back(cell);
            }
        }
        SDIL_REQUIRE(!candidates.empty(), "no decoy targets available");
        Cell target = candidates[rng.index(candidates.size())];
        return plan_to(env, start, target, 0, /*clean=*/false, /*avoid_goal=*/true);
    }

    // Random walk: uniform actions until termination or timeout.
    EpisodeBuilder ep(env, start, 0, /*clean=*/false);
    while (!ep.done) ep.apply(rng.index(env.n_actions()));
    return ep.finish();
}

} // namespace sdil::grid
