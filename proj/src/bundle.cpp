#include "slicesim/bundle.hpp"

#include <stdexcept>

namespace slicesim {

namespace {
constexpr std::array<Trade, kCatalogSize> kCatalog{{{-1, -1}, {1, 0}, {2, 0}, {0, 1}, {2, 1}, {0, 2}, {1, 2}}};
}

Trade catalog_entry(int k) {
    if (k < 0 || k >= kCatalogSize) throw std::out_of_range("catalog_entry");
    return kCatalog[static_cast<std::size_t>(k)];
}

std::string catalog_label(int k) {
    const Trade t = catalog_entry(k);
    if (t.noop()) return "do nothing";
    if (t.donor == 2) return "throttle mMTC for " + std::string(slice_name(t.recipient));
    return "reduce " + std::string(slice_name(t.donor)) + " for " + std::string(slice_name(t.recipient));
}

std::array<double, kActionEncodingDim> encode_catalog(int k) {
    std::array<double, kActionEncodingDim> e{};
    const Trade t = catalog_entry(k);
    if (t.noop()) return e;
    for (int r = 0; r < 2; ++r) {
        e[static_cast<std::size_t>(t.donor * kNumResources + r)] = -10.0 * kTradeSize;
        e[static_cast<std::size_t>(t.recipient * kNumResources + r)] = 10.0 * kTradeSize;
    }
    return e;
}

std::array<double, kActionEncodingDim> encode_share_change(const ShareMatrix& before, const ShareMatrix& after) {
    std::array<double, kActionEncodingDim> e{};
    for (int s = 0; s < kNumSlices; ++s)
        for (int r = 0; r < kNumResources; ++r) {
            auto si = static_cast<std::size_t>(s), ri = static_cast<std::size_t>(r);
            e[si * kNumResources + ri] = 10.0 * (after[si][ri] - before[si][ri]);
        }
    return e;
}

bool catalog_feasible(const ShareMatrix& shares, int k, double floor) {
    const Trade t = catalog_entry(k);
    if (t.noop()) return true;
    for (int r = 0; r < 2; ++r) {
        if (shares[static_cast<std::size_t>(t.donor)][static_cast<std::size_t>(r)] - kTradeSize < floor - 1e-12) return false;
        if (shares[static_cast<std::size_t>(t.recipient)][static_cast<std::size_t>(r)] + kTradeSize > 1.0 + 1e-12) return false;
    }
    return true;
}

ShareMatrix apply_catalog(const ShareMatrix& shares, int k) {
    ShareMatrix out = shares;
    const Trade t = catalog_entry(k);
    if (t.noop()) return out;
    for (int r = 0; r < 2; ++r) {
        out[static_cast<std::size_t>(t.donor)][static_cast<std::size_t>(r)] -= kTradeSize;
        out[static_cast<std::size_t>(t.recipient)][static_cast<std::size_t>(r)] += kTradeSize;
    }
    return out;
}

std::string_view head_name(int h) {
    static constexpr std::array<std::string_view, kHeads> names{"semantic", "temporal", "cross_slice",
                                                               "confidence", "counterfactual", "meta"};
    if (h < 0 || h >= kHeads) return "?";
    return names[static_cast<std::size_t>(h)];
}

}  // namespace slicesim
