// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/rs.hpp"

#include <algorithm>
#include <cassert>

#include "ftmatch/gf256.hpp"

namespace ftmatch::rs {

using Matrix = std::vector<std::vector<uint8_t>>;

Code::Code(int data_shards, int parity_shards)
    : data_(data_shards),
      parity_(parity_shards >= 0 ? parity_shards : (data_shards + 1) / 2) {
    if (data_ < 1 || parity_ < 0 || data_ + parity_ > 256)
        throw std::invalid_argument("rs::Code: invalid shard counts");

    // Vandermonde rows V[i][j] = i^j, then column-reduce so the top g x g
    // block is the identity. Elementary column operations preserve the
    // property that every g-row subset is invertible.
    const int total = data_ + parity_;
    Matrix v(total, std::vector<uint8_t>(data_, 0));
    for (int i = 0; i < total; ++i)
        for (int j = 0; j < data_; ++j)
            v[i][j] = gf256::pow(static_cast<uint8_t>(i), static_cast<unsigned>(j));

    // Gauss-Jordan on columns using the top block as pivots.
    for (int r = 0; r < data_; ++r) {
        if (v[r][r] == 0) {
            for (int c = r + 1; c < data_; ++c)
                if (v[r][c] != 0) {
                    for (int i = 0; i < total; ++i) std::swap(v[i][r], v[i][c]);
                    break;
                }
        }
        uint8_t d = gf256::inv(v[r][r]);
        for (int i = 0; i < total; ++i) v[i][r] = gf256::mul(v[i][r], d);
        for (int c = 0; c < data_; ++c) {
            if (c == r || v[r][c] == 0) continue;
            uint8_t f = v[r][c];
            for (int i = 0; i < total; ++i) v[i][c] ^= gf256::mul(f, v[i][r]);
        }
    }
    gen_ = std::move(v);
}

std::vector<Shard> Code::encode(const std::vector<Shard>& data) const {
    if (static_cast<int>(data.size()) != data_)
        throw std::invalid_argument("rs::encode: wrong number of data shards");
    const std::size_t len = data.empty() ? 0 : data[0].size();
    for (const auto& s : data)
        if (s.size() != len) throw std::invalid_argument("rs::encode: unequal shard lengths");

    std::vector<Shard> parity(parity_, Shard(len, 0));
    for (int p = 0; p < parity_; ++p)
        for (int d = 0; d < data_; ++d)
            gf256::mul_acc(parity[p].data(), data[d].data(), gen_[data_ + p][d], len);
    return parity;
}

std::vector<Shard> Code::decode(const std::vector<std::pair<int, Shard>>& present) const {
    if (static_cast<int>(present.size()) < data_)
        throw TooManyErasures("rs::decode: fewer than g shards present");

    // Use the first g present shards, preferring data shards (cheap path).
    std::vector<std::pair<int, const Shard*>> use;
    for (const auto& [idx, s] : present) {
        if (idx < 0 || idx >= total_shards())
            throw std::invalid_argument("rs::decode: shard index out of range");
        use.emplace_back(idx, &s);
    }
    std::sort(use.begin(), use.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    use.resize(data_);

    const std::size_t len = use[0].second->size();
    for (const auto& [idx, s] : use)
        if (s->size() != len) throw std::invalid_argument("rs::decode: unequal shard lengths");

    // Rows of the generator matrix for the shards we hold.
    Matrix sub(data_, std::vector<uint8_t>(data_));
    for (int r = 0; r < data_; ++r) sub[r] = gen_[use[r].first];

    // Gauss-Jordan inversion.
    Matrix inv(data_, std::vector<uint8_t>(data_, 0));
    for (int i = 0; i < data_; ++i) inv[i][i] = 1;
    for (int col = 0; col < data_; ++col) {
        int pivot = -1;
        for (int r = col; r < data_; ++r)
            if (sub[r][col] != 0) { pivot = r; break; }
        assert(pivot >= 0);
        std::swap(sub[col], sub[pivot]);
        std::swap(inv[col], inv[pivot]);
        uint8_t d = gf256::inv(sub[col][col]);
        for (int c = 0; c < data_; ++c) {
            sub[col][c] = gf256::mul(sub[col][c], d);
            inv[col][c] = gf256::mul(inv[col][c], d);
        }
        for (int r = 0; r < data_; ++r) {
            if (r == col || sub[r][col] == 0) continue;
            uint8_t f = sub[r][col];
            for (int c = 0; c < data_; ++c) {
                sub[r][c] ^= gf256::mul(f, sub[col][c]);
                inv[r][c] ^= gf256::mul(f, inv[col][c]);
            }
        }
    }

    std::vector<Shard> out(data_, Shard(len, 0));
    for (int d = 0; d < data_; ++d)
        for (int r = 0; r < data_; ++r)
            gf256::mul_acc(out[d].data(), use[r].second->data(), inv[d][r], len);
    return out;
}

}  // namespace ftmatch::rs
