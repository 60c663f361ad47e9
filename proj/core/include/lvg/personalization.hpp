// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lvg/diffusion.hpp"
#include "lvg/image.hpp"

namespace lvg {

struct SubjectSpec {
  /// Rare identifier bound to the subject, e.g. "[V]".
  std::string token;
  std::string class_name;
  /// 3 to 5 subject images.
  std::vector<Image> images;
  /// Images are center-cropped and resized to this size before encoding.
  int image_size = 64;
  SgdOptions sgd{.steps = 300, .batch = 4, .learning_rate = 0.05, .seed = 0, .fixed_noise = true};

  /// "A <token> <class>".
  std::string prompt() const;
  void validate() const;
};

/// True for words the identifier token must not collide with.
bool is_common_word(std::string_view word);

/// Plain fine-tuning of every backend parameter on the (image, prompt)
/// pairs. Returns a new backend; the input is not modified.
std::unique_ptr<DiffusionBackend> personalize(const DiffusionBackend& backend, const SubjectSpec& spec,
                                              const NoiseSchedule& schedule, TrainingReport* report = nullptr);

}  // namespace lvg
