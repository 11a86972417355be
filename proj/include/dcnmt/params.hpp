#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcnmt/tensor.hpp"

namespace dcnmt {

// Named, ordered collection of trainable tensors. Names follow a stable
// dotted scheme (e.g. "enc.L0.self.wq") so checkpoints round-trip across
// runs; see README for the full naming scheme.
class ParamStore {
public:
    Tensor& create(const std::string& name, std::vector<std::size_t> shape, Rng& rng,
                   double init_scale) {
        if (params_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
        std::size_t n = Tensor::numel_of(shape);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.normal(0.0, init_scale);
        Tensor t = Tensor::from(std::move(shape), std::move(v), /*requires_grad=*/true);
        // Parameters must record gradients even if created under NoGrad.
        t.node()->requires_grad = true;
        Tensor::ensure_grad(*t.node());
        return params_.emplace(name, t).first->second;
    }

    Tensor& create_const(const std::string& name, std::vector<std::size_t> shape,
                         double fill) {
        if (params_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
        Tensor t(std::move(shape), fill, /*requires_grad=*/true);
        t.node()->requires_grad = true;
        Tensor::ensure_grad(*t.node());
        return params_.emplace(name, t).first->second;
    }

    Tensor& create_zeros(const std::string& name, std::vector<std::size_t> shape) {
        if (params_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
        Tensor t(std::move(shape), 0.0, /*requires_grad=*/true);
        t.node()->requires_grad = true;
        Tensor::ensure_grad(*t.node());
        return params_.emplace(name, t).first->second;
    }

    Tensor& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
        return it->second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    std::map<std::string, Tensor>& all() { return params_; }
    const std::map<std::string, Tensor>& all() const { return params_; }

    std::size_t count_values() const {
        std::size_t n = 0;
        for (const auto& [k, t] : params_) n += t.size();
        return n;
    }

    std::size_t count_values_with_prefix(const std::string& prefix) const {
        std::size_t n = 0;
        for (const auto& [k, t] : params_)
            if (k.rfind(prefix, 0) == 0) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [k, t] : params_) t.zero_grad();
    }

private:
    std::map<std::string, Tensor> params_;
};

// Adam optimizer. State is keyed by parameter name so it survives
// checkpointing of the parameters themselves.
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, double(t_));
        double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (auto& [name, p] : params.all()) {
            auto& m = m_[name];
            auto& v = v_[name];
            if (m.size() != p.size()) m.assign(p.size(), 0.0);
            if (v.size() != p.size()) v.assign(p.size(), 0.0);
            for (std::size_t i = 0; i < p.size(); ++i) {
                double g = p.grad()[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                p.val()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    long steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: plain text, one parameter per line.
//
//   dcnmt-checkpoint 1
//   meta <count>
//   <key> <value>           (repeated, value is the rest of the line)
//   tensors <count>
//   <name> <ndim> <d0> ... <v0> <v1> ...
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            const std::map<std::string, std::string>& meta = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << "dcnmt-checkpoint 1\n";
    out << "meta " << meta.size() << "\n";
    for (const auto& [k, v] : meta) out << k << " " << v << "\n";
    out << "tensors " << params.all().size() << "\n";
    out << std::setprecision(17);
    for (const auto& [name, t] : params.all()) {
        out << name << " " << t.ndim();
        for (auto d : t.shape()) out << " " << d;
        for (double x : t.val()) out << " " << x;
        out << "\n";
    }
}

inline std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                          ParamStore& params) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "dcnmt-checkpoint" || version != 1)
        throw std::runtime_error("bad checkpoint header in " + path);
    std::string tag;
    std::size_t nmeta = 0;
    in >> tag >> nmeta;
    if (tag != "meta") throw std::runtime_error("bad checkpoint meta section");
    std::map<std::string, std::string> meta;
    std::getline(in, tag);  // eat rest of line
    for (std::size_t i = 0; i < nmeta; ++i) {
        std::string line;
        std::getline(in, line);
        auto sp = line.find(' ');
        meta[line.substr(0, sp)] = sp == std::string::npos ? "" : line.substr(sp + 1);
    }
    std::size_t ntensors = 0;
    in >> tag >> ntensors;
    if (tag != "tensors") throw std::runtime_error("bad checkpoint tensor section");
    for (std::size_t i = 0; i < ntensors; ++i) {
        std::string name;
        std::size_t ndim = 0;
        in >> name >> ndim;
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) in >> d;
        std::size_t n = Tensor::numel_of(shape);
        std::vector<double> v(n);
        for (auto& x : v) in >> x;
        if (!in) throw std::runtime_error("truncated checkpoint: " + path);
        if (params.has(name)) {
            Tensor& t = params.at(name);
            if (t.shape() != shape)
                throw std::runtime_error("checkpoint shape mismatch for " + name);
            t.val() = std::move(v);
        } else {
            Tensor t = Tensor::from(shape, std::move(v), true);
            t.node()->requires_grad = true;
            Tensor::ensure_grad(*t.node());
            params.all().emplace(name, t);
        }
    }
    return meta;
}

}  // namespace dcnmt
