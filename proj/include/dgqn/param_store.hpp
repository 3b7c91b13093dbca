#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dgqn/tensor.hpp"

namespace dgqn {

/// Named parameter tensors with matching gradient accumulators, a step
/// counter, and RMSProp state. Iteration follows insertion order. Not
/// thread-safe; concurrent use is coordinated by the caller.
class ParamStore {
public:
    void add(const std::string& name, Tensor value);
    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }
    std::size_t total_elements() const;
    std::uint64_t step() const { return step_; }

    const Tensor& grad(const std::string& name) const;
    void accumulate_grad(const std::string& name, const Tensor& g);
    void accumulate_grads(const std::map<std::string, Tensor>& grads);
    void clear_grads();

    /// RMSProp update in place; clears gradients; advances the step counter.
    /// Throws on a non-finite gradient, naming the offending parameter.
    void optimizer_step(double learning_rate, double decay = 0.99, double epsilon = 1e-8);

    /// Copies parameter values (not grads, not optimizer state) from another
    /// store with an identical layout.
    void copy_values_from(const ParamStore& other);

    /// Serialized form: magic, manifest length, JSON manifest
    /// (name/shape/dtype/offset per tensor plus meta strings), then raw
    /// little-endian float64 payloads. Round trip is bit-exact.
    void save(std::ostream& out, const std::map<std::string, std::string>& meta = {}) const;
    static ParamStore load(std::istream& in, std::map<std::string, std::string>* meta = nullptr);
    void save_file(const std::string& path, const std::map<std::string, std::string>& meta = {}) const;
    static ParamStore load_file(const std::string& path,
                                std::map<std::string, std::string>* meta = nullptr);

    /// True when names, shapes, step and every payload byte match exactly.
    bool bit_identical(const ParamStore& other) const;

private:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor ms;  // RMSProp mean-square accumulator
    };

    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::vector<std::string> order_;
    std::map<std::string, Entry> entries_;
    std::uint64_t step_ = 0;
};

}  // namespace dgqn
