#include "dgqn/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dgqn {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'Q', 'N', 'C', 'K', 'P', '1'};
constexpr const char* kOptPrefix = "opt.ms/";

void write_u64_le(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    char buf[8];
    in.read(buf, 8);
    if (!in) throw std::runtime_error("checkpoint: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& out, const double* data, std::size_t n) {
    std::vector<char> buf(n * 8);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_f64_le(const char* buf, double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i * 8 + b]))
                    << (8 * b);
        data[i] = std::bit_cast<double>(bits);
    }
}

}  // namespace

void ParamStore::add(const std::string& name, Tensor value) {
    if (name.empty()) throw std::invalid_argument("ParamStore::add: empty name");
    if (entries_.count(name))
        throw std::invalid_argument("ParamStore::add: duplicate parameter '" + name + "'");
    Entry e;
    e.grad = Tensor::zeros(value.shape());
    e.ms = Tensor::zeros(value.shape());
    e.value = std::move(value);
    entries_.emplace(name, std::move(e));
    order_.push_back(name);
}

bool ParamStore::has(const std::string& name) const { return entries_.count(name) != 0; }

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::get(const std::string& name) const { return entry(name).value; }
const Tensor& ParamStore::grad(const std::string& name) const { return entry(name).grad; }

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += entries_.at(name).value.numel();
    return n;
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g) {
    Entry& e = entry(name);
    if (!e.value.same_shape(g))
        throw std::invalid_argument("ParamStore: gradient shape " + g.shape_str() +
                                    " does not match parameter '" + name + "' " +
                                    e.value.shape_str());
    double* dst = e.grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

void ParamStore::accumulate_grads(const std::map<std::string, Tensor>& grads) {
    for (const auto& [name, g] : grads) accumulate_grad(name, g);
}

void ParamStore::clear_grads() {
    for (auto& [name, e] : entries_)
        std::fill(e.grad.vec().begin(), e.grad.vec().end(), 0.0);
}

void ParamStore::optimizer_step(double learning_rate, double decay, double epsilon) {
    for (const auto& name : order_) {
        Entry& e = entries_.at(name);
        double* w = e.value.data();
        double* g = e.grad.data();
        double* ms = e.ms.data();
        for (std::size_t i = 0; i < e.value.numel(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("optimizer_step: non-finite gradient in parameter '" +
                                         name + "'");
            ms[i] = decay * ms[i] + (1.0 - decay) * g[i] * g[i];
            w[i] -= learning_rate * g[i] / (std::sqrt(ms[i]) + epsilon);
        }
    }
    clear_grads();
    ++step_;
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (order_ != other.order_)
        throw std::invalid_argument("ParamStore::copy_values_from: layouts differ");
    for (const auto& name : order_) {
        Entry& dst = entries_.at(name);
        const Entry& src = other.entries_.at(name);
        if (!dst.value.same_shape(src.value))
            throw std::invalid_argument("ParamStore::copy_values_from: shape mismatch at '" +
                                        name + "'");
        dst.value.vec() = src.value.vec();
    }
}

void ParamStore::save(std::ostream& out, const std::map<std::string, std::string>& meta) const {
    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["step"] = step_;
    manifest["meta"] = meta;
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    auto describe = [&](const std::string& name, const Tensor& t) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["dtype"] = "f64";
        e["offset"] = offset;
        offset += static_cast<std::uint64_t>(t.numel()) * 8;
        tensors.push_back(std::move(e));
    };
    for (const auto& name : order_) describe(name, entries_.at(name).value);
    for (const auto& name : order_) describe(kOptPrefix + name, entries_.at(name).ms);
    manifest["tensors"] = std::move(tensors);

    const std::string json = manifest.dump();
    out.write(kMagic, 8);
    write_u64_le(out, json.size());
    out.write(json.data(), static_cast<std::streamsize>(json.size()));
    for (const auto& name : order_) {
        const Tensor& t = entries_.at(name).value;
        write_f64_le(out, t.data(), t.numel());
    }
    for (const auto& name : order_) {
        const Tensor& t = entries_.at(name).ms;
        write_f64_le(out, t.data(), t.numel());
    }
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

ParamStore ParamStore::load(std::istream& in, std::map<std::string, std::string>* meta) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    const std::uint64_t json_len = read_u64_le(in);
    std::string json(json_len, '\0');
    in.read(json.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw std::runtime_error("checkpoint: truncated manifest");
    nlohmann::json manifest = nlohmann::json::parse(json);
    if (manifest.value("format", 0) != 1)
        throw std::runtime_error("checkpoint: unsupported format");
    if (meta) *meta = manifest.value("meta", std::map<std::string, std::string>{});

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    ParamStore store;
    store.step_ = manifest.value("step", std::uint64_t{0});
    for (const auto& e : manifest.at("tensors")) {
        const std::string name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<std::vector<std::size_t>>();
        if (e.at("dtype").get<std::string>() != "f64")
            throw std::runtime_error("checkpoint: unsupported dtype for '" + name + "'");
        const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
        Tensor t(shape);
        if (offset + t.numel() * 8 > payload.size())
            throw std::runtime_error("checkpoint: payload out of range for '" + name + "'");
        read_f64_le(payload.data() + offset, t.data(), t.numel());
        if (name.rfind(kOptPrefix, 0) == 0) {
            const std::string base = name.substr(std::strlen(kOptPrefix));
            store.entry(base).ms = std::move(t);
        } else {
            store.add(name, std::move(t));
        }
    }
    return store;
}

void ParamStore::save_file(const std::string& path,
                           const std::map<std::string, std::string>& meta) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    save(out, meta);
}

ParamStore ParamStore::load_file(const std::string& path,
                                 std::map<std::string, std::string>* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    return load(in, meta);
}

bool ParamStore::bit_identical(const ParamStore& other) const {
    if (order_ != other.order_ || step_ != other.step_) return false;
    for (const auto& name : order_) {
        const Entry& a = entries_.at(name);
        const Entry& b = other.entries_.at(name);
        if (!a.value.same_shape(b.value)) return false;
        if (std::memcmp(a.value.data(), b.value.data(), a.value.numel() * 8) != 0) return false;
        if (std::memcmp(a.ms.data(), b.ms.data(), a.ms.numel() * 8) != 0) return false;
    }
    return true;
}

}  // namespace dgqn
