#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dcnmt {

// Flat key-value config file: one "key = value" per line, '#' comments.
// Documented keys: mode, lambda1, lambda2, beta, seed, epochs, lr,
// beam_size, shuffle, warm_steps, max_steps, train_src, train_tgt, dev_src,
// dev_tgt, vocab_src, vocab_tgt, teacher_ckpt, model_ckpt, out_dir,
// d_model, n_heads, d_ff, n_enc_layers, n_dec_layers, max_len, dropout_keep.
class Config {
public:
    Config() = default;

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read config: " + path);
        Config c;
        std::string line;
        while (std::getline(in, line)) {
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            c.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return c;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: missing key '" + key + "'");
        return it->second;
    }

    double num(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : std::stod(it->second);
    }

    long integer(const std::string& key, long fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : std::stol(it->second);
    }

    const std::map<std::string, std::string>& all() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace dcnmt
