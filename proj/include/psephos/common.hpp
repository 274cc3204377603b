#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace psephos {

// Input could not be read or decoded (bad file, bad row, bad config key).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
    ParseError(const std::string& msg, std::size_t line)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

// Input decoded fine but violates a data invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
    ValidationError(const std::string& msg, std::size_t line)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
public:
    explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-fatal diagnostics are collected rather than printed, so callers decide
// whether they go to stderr, a report file, or nowhere.
class Warnings {
public:
    void add(std::string msg) { messages_.push_back(std::move(msg)); }
    const std::vector<std::string>& messages() const { return messages_; }
    bool empty() const { return messages_.empty(); }
    std::size_t size() const { return messages_.size(); }

private:
    std::vector<std::string> messages_;
};

inline void warn(Warnings* sink, std::string msg) {
    if (sink) sink->add(std::move(msg));
}

// Compensated (Kahan) accumulator. Summation order is fixed by the caller,
// which keeps reductions bitwise reproducible.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

template <typename T>
T clamp(T x, T lo, T hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

// Runs fn(i) for i in [0, count). Work items are pre-assigned to workers by
// index stride and must write only to their own output slots, so the result
// is identical for any worker count.
inline void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    unsigned w = std::min<unsigned>(workers, static_cast<unsigned>(count));
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (unsigned t = 0; t < w; ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t i = t; i < count; i += w) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace psephos
