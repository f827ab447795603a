#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdiff/diffusion.hpp"

namespace maskdiff {

// Plain-text dataset file.
//   line 1:  maskdiff-data 1 <vocab> <len> <source> <seed> <count>
//   lines 2..count+1: <len> space-separated token ids in [0, vocab)
struct DatasetFile {
    int vocab = 0;
    int len = 0;
    std::string source;
    uint64_t seed = 0;
    std::vector<TokenSeq> rows;
};

void write_dataset(const DatasetFile& ds, const std::string& path);
DatasetFile read_dataset(const std::string& path);

}  // namespace maskdiff
