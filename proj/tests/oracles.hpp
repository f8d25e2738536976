// Independent reference implementations used as test oracles. They share
// no code with the engine and favour obviousness over speed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

struct Marker {
    std::int64_t index;
    std::size_t begin;
    std::size_t end;
};

/// Every "[digits]" occurrence, found by trying each '[' position in turn.
inline std::vector<Marker> scan_markers(const std::string& s) {
    std::vector<Marker> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        if (s[pos] == '[') {
            std::size_t k = pos + 1;
            std::string digits;
            while (k < s.size() && s[k] >= '0' && s[k] <= '9') digits += s[k++];
            if (!digits.empty() && k < s.size() && s[k] == ']') {
                out.push_back({std::stoll(digits), pos, k + 1});
                pos = k + 1;
                continue;
            }
        }
        ++pos;
    }
    return out;
}

/// Distinct values, collected by linear membership checks.
inline std::vector<std::int64_t> unique_of(const std::vector<std::int64_t>& xs) {
    std::vector<std::int64_t> out;
    for (const auto x : xs) {
        if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
    }
    return out;
}

struct Prf {
    double p;
    double r;
    double f1;
};

/// Set precision/recall/F1 with the vacuous-agreement convention.
inline Prf citation_prf(const std::vector<std::int64_t>& pred_raw, const std::vector<std::int64_t>& gold_raw) {
    const auto pred = unique_of(pred_raw);
    const auto gold = unique_of(gold_raw);
    if (pred.empty() && gold.empty()) return {1.0, 1.0, 1.0};
    if (pred.empty() || gold.empty()) return {0.0, 0.0, 0.0};
    std::size_t hits = 0;
    for (const auto p : pred) {
        for (const auto g : gold) hits += (p == g) ? 1 : 0;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(pred.size());
    const double r = static_cast<double>(hits) / static_cast<double>(gold.size());
    const double f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    return {p, r, f1};
}

inline std::vector<std::int64_t> fabricated(const std::vector<std::int64_t>& pred, std::int64_t n) {
    std::vector<std::int64_t> out;
    for (const auto x : unique_of(pred)) {
        if (x < 1 || x > n) out.push_back(x);
    }
    std::sort(out.begin(), out.end());
    return out;
}

using Tokens = std::vector<std::string>;

inline std::map<Tokens, long> ngram_counts(const Tokens& t, std::size_t n) {
    std::map<Tokens, long> out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) out[Tokens(t.begin() + i, t.begin() + i + n)] += 1;
    return out;
}

/// Corpus BLEU: clipped precisions, orders with no candidate n-grams
/// skipped, unsmoothed, brevity penalty when the candidate is shorter.
inline double bleu(const std::vector<Tokens>& cands, const std::vector<Tokens>& refs, std::size_t max_n = 4) {
    long c = 0;
    long r = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        c += static_cast<long>(cands[i].size());
        r += static_cast<long>(refs[i].size());
    }
    if (c == 0) return 0.0;
    double product = 1.0;
    int used = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        long match = 0;
        long total = 0;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const auto cc = ngram_counts(cands[i], n);
            const auto rc = ngram_counts(refs[i], n);
            for (const auto& [g, k] : cc) {
                total += k;
                const auto it = rc.find(g);
                match += std::min(k, it == rc.end() ? 0L : it->second);
            }
        }
        if (total == 0) continue;
        if (match == 0) return 0.0;
        product *= static_cast<double>(match) / static_cast<double>(total);
        ++used;
    }
    const double geo = std::pow(product, 1.0 / used);
    const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * geo;
}

inline double f_measure(double hits, double cand_len, double ref_len) {
    if (cand_len == 0 && ref_len == 0) return 1.0;
    if (cand_len == 0 || ref_len == 0 || hits == 0) return 0.0;
    const double p = hits / cand_len;
    const double rr = hits / ref_len;
    return 2 * p * rr / (p + rr);
}

inline double rouge1(const Tokens& cand, const Tokens& ref) {
    std::map<std::string, long> cc;
    std::map<std::string, long> rc;
    for (const auto& t : cand) ++cc[t];
    for (const auto& t : ref) ++rc[t];
    long hits = 0;
    for (const auto& [t, k] : cc) hits += std::min(k, rc.count(t) ? rc.at(t) : 0L);
    return f_measure(static_cast<double>(hits), static_cast<double>(cand.size()), static_cast<double>(ref.size()));
}

/// Full-table LCS.
inline std::size_t lcs(const Tokens& a, const Tokens& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = a.size(); i-- > 0;) {
        for (std::size_t j = b.size(); j-- > 0;) {
            t[i][j] = a[i] == b[j] ? 1 + t[i + 1][j + 1] : std::max(t[i + 1][j], t[i][j + 1]);
        }
    }
    return t[0][0];
}

inline double rougeL(const Tokens& cand, const Tokens& ref) {
    return f_measure(static_cast<double>(lcs(cand, ref)), static_cast<double>(cand.size()),
                     static_cast<double>(ref.size()));
}

/// Entropy and top-k share of |scores| normalised to a distribution.
inline std::pair<double, double> saliency(const std::vector<double>& scores, std::size_t k) {
    double total = 0;
    for (const auto s : scores) total += std::fabs(s);
    std::vector<double> p;
    double h = 0;
    for (const auto s : scores) {
        const double q = std::fabs(s) / total;
        p.push_back(q);
        if (q > 0) h += -q * std::log(q);
    }
    std::sort(p.rbegin(), p.rend());
    double top = 0;
    for (std::size_t i = 0; i < std::min(k, p.size()); ++i) top += p[i];
    return {h, std::min(top, 1.0)};
}

}  // namespace oracle
