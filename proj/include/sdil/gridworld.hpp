#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdil/common.hpp"
#include "sdil/rng.hpp"

namespace sdil::grid {

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

// Movement actions are shared; pickup/toggle exist only in DoorKey-lite.
enum Action : int { Up = 0, Down = 1, Left = 2, Right = 3, Pickup = 4, Toggle = 5 };

struct State {
    Cell agent;
    bool has_key = false;
    bool door_open = false;
};

struct StepResult {
    State next;
    float reward = 0.0f;
    bool done = false;
};

enum class EnvKind { FourRoom, DoorKey, OpenRoom };

// Deterministic gridworld MDP. Immutable after construction; rollouts carry
// their own State, so one Env can serve many threads.
class Env {
public:
    static Env four_room(int size = 9, Cell goal = {8, 8}, int max_steps = 100);
    static Env door_key(int size = 9, int max_steps = 200);
    static Env open_room(int width, int height, Cell goal, int max_steps);
    static Env by_name(const std::string& name); // "fourroom" | "doorkey"

    EnvKind kind() const { return kind_; }
    int width() const { return width_; }
    int height() const { return height_; }
    int n_actions() const { return n_actions_; }
    int max_steps() const { return max_steps_; }
    float discount() const { return discount_; }
    Cell goal() const { return goal_; }
    Cell key_cell() const { return key_; }
    Cell door_cell() const { return door_; }
    std::string name() const;

    bool in_bounds(Cell c) const {
        return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
    }
    bool is_wall(Cell c) const { return walls_[cell_index(c)]; }
    int cell_index(Cell c) const { return c.row * width_ + c.col; }

    State initial_state(Cell start) const;
    // Valid start cells: non-wall, not the goal (DoorKey: left room only).
    const std::vector<Cell>& start_cells() const { return start_cells_; }
    Cell sample_start(Rng& rng) const;

    // Transition function. `steps_taken` counts this step (1-based on the
    // first call); reaching the goal yields 100*(1 - 0.9*steps/max_steps),
    // every other outcome yields 0. Moving into a wall or off the grid
    // leaves the cell unchanged.
    StepResult step(const State& state, int action, int steps_taken) const;

    // State features: one-hot(agent) ++ one-hot(goal) ++ key ++ door flags.
    int state_dim() const { return 2 * width_ * height_ + 2; }
    std::vector<float> features(const State& state) const;

private:
    EnvKind kind_ = EnvKind::OpenRoom;
    int width_ = 0;
    int height_ = 0;
    int n_actions_ = 4;
    int max_steps_ = 100;
    float discount_ = 0.99f;
    Cell goal_;
    Cell key_{-1, -1};
    Cell door_{-1, -1};
    std::vector<bool> walls_;
    std::vector<Cell> start_cells_;

    void finalize(); // validates reachability, collects start cells
    bool passable(Cell c, const State& s) const;
};

enum class TrajOutcome { ReachedGoal, Elsewhere, Timeout };

struct Transition {
    std::vector<float> state;
    int action = 0;
};

struct Trajectory {
    int id = 0;
    bool clean = true;
    std::vector<Transition> steps;
    TrajOutcome outcome = TrajOutcome::Elsewhere;
    float reward = 0.0f; // episode reward (not persisted in the corpus file)
};

// Shortest-path expert. FourRoom/OpenRoom: plain BFS to the goal.
// DoorKey: BFS start->key, pickup, BFS key->door-adjacent, toggle,
// BFS through the door to the goal.
Trajectory plan_expert(const Env& env, Cell start);

enum class NoisyMode { DecoyGoal, RandomWalk };

// Noisy demonstrations: DecoyGoal plans a shortest path to a random
// non-goal cell (the goal cell is treated as blocked so the episode never
// terminates at it); RandomWalk takes uniform actions until done/timeout.
Trajectory generate_noisy(const Env& env, Cell start, NoisyMode mode, Rng& rng);

} // namespace sdil::grid
