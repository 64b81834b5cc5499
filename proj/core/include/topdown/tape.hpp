#pragma once

#include <functional>

#include "topdown/tensor.hpp"

namespace topdown {

// Reverse-mode tape. Ops record a backward closure per node in construction
// order; backward() replays them in exact reverse order. One tape per
// thread may be active; ops record only while a TapeScope is alive, so
// inference paths pay no autodiff cost.
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Seeds d(root)/d(root) = 1 and visits nodes in reverse construction
    // order. Running backward twice without re-recording is an error.
    void backward(Tensor<T> root) {
        if (root.numel() != 1)
            throw std::invalid_argument("backward: root must be scalar, got " +
                                        shape_str(root.shape()));
        if (!root.requires_grad())
            throw std::invalid_argument("backward: root is not on the tape");
        if (consumed_)
            throw std::logic_error("backward: tape already consumed; re-record before "
                                   "running backward again");
        consumed_ = true;
        root.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    static Tape*& current() {
        thread_local Tape* active = nullptr;
        return active;
    }

private:
    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
};

// RAII activation of a tape on the current thread.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : prev_(Tape<T>::current()) {
        Tape<T>::current() = &tape;
    }
    ~TapeScope() { Tape<T>::current() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* prev_;
};

}  // namespace topdown
