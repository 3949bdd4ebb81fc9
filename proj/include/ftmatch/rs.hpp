// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ftmatch::rs {

struct TooManyErasures : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shard = std::vector<uint8_t>;

// Systematic Reed-Solomon over GF(2^8): g data shards, ceil(g/2) parity
// shards by default. Any subset of >= g shards reconstructs the data.
class Code {
  public:
    explicit Code(int data_shards, int parity_shards = -1);

    int data_shards() const { return data_; }
    int parity_shards() const { return parity_; }
    int total_shards() const { return data_ + parity_; }

    // All data shards must have equal length; returns parity shards.
    std::vector<Shard> encode(const std::vector<Shard>& data) const;

    // present[i] pairs a shard index in [0, total) with its contents.
    // Returns the g data shards. Throws TooManyErasures if fewer than g
    // shards are present.
    std::vector<Shard> decode(const std::vector<std::pair<int, Shard>>& present) const;

  private:
    int data_;
    int parity_;
    // (data+parity) x data generator matrix, identity on top.
    std::vector<std::vector<uint8_t>> gen_;
};

}  // namespace ftmatch::rs
