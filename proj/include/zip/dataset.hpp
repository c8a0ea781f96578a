#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "zip/imaging.hpp"

namespace zip {

struct Sample {
    Image image;
    int label = 0;
    bool poisoned = false;
    std::string name;
};

struct Dataset {
    std::vector<Sample> samples;
    int class_count = 0;

    std::size_t size() const { return samples.size(); }

    void check_labels() const {
        for (const Sample& s : samples) {
            if (s.label < 0 || s.label >= class_count) {
                throw std::invalid_argument("Dataset: label " + std::to_string(s.label) +
                                            " outside [0," + std::to_string(class_count) + ")");
            }
        }
    }
};

}  // namespace zip
