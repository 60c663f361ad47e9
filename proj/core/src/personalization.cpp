// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/personalization.hpp"

#include <algorithm>
#include <array>

#include "lvg/error.hpp"
#include "lvg/text_encoder.hpp"

namespace lvg {
namespace {

constexpr std::array<std::string_view, 96> kCommonWords = {
    "a",      "an",     "the",    "and",    "or",     "of",     "in",     "on",     "at",     "to",
    "with",   "by",     "for",    "from",   "is",     "are",    "it",     "its",    "this",   "that",
    "person", "man",    "woman",  "boy",    "girl",   "child",  "people", "dog",    "cat",    "bird",
    "horse",  "car",    "bike",   "ball",   "house",  "tree",   "park",   "beach",  "street", "city",
    "room",   "kitchen", "water", "snow",   "stage",  "forest", "night",  "day",    "sky",    "sun",
    "walks",  "runs",   "jumps",  "dances", "sits",   "swims",  "cooks",  "reads",  "plays",  "eats",
    "red",    "blue",   "green",  "black",  "white",  "small",  "big",    "old",    "young",  "new",
    "photo",  "picture", "video", "image",  "style",  "toy",    "bear",   "cup",    "table",  "chair",
    "does",   "something", "some", "one",  "two",    "very",   "up",     "down",   "over",   "under",
    "into",   "out",    "near",   "his",    "her",    "their"};

}  // namespace

bool is_common_word(std::string_view word) {
  return std::find(kCommonWords.begin(), kCommonWords.end(), word) != kCommonWords.end();
}

std::string SubjectSpec::prompt() const { return "A " + token + " " + class_name; }

void SubjectSpec::validate() const {
  if (images.size() < 3 || images.size() > 5) {
    throw Error(Errc::kInvalidArgument,
                "personalization needs 3 to 5 subject images, got " + std::to_string(images.size()));
  }
  const auto tokens = tokenize(token);
  if (tokens.size() != 1) throw Error(Errc::kInvalidArgument, "identifier token must be a single word");
  if (is_common_word(tokens.front())) {
    throw Error(Errc::kInvalidArgument, "identifier token '" + token + "' is a common word; pick a rare token");
  }
  if (tokenize(class_name).empty()) throw Error(Errc::kInvalidArgument, "class name must not be empty");
  for (const auto& c : tokenize(class_name)) {
    if (c == tokens.front()) throw Error(Errc::kInvalidArgument, "identifier token repeats the class name");
  }
  if (image_size < 1) throw Error(Errc::kInvalidArgument, "image size must be positive");
}

std::unique_ptr<DiffusionBackend> personalize(const DiffusionBackend& backend, const SubjectSpec& spec,
                                              const NoiseSchedule& schedule, TrainingReport* report) {
  spec.validate();
  const Condition c = backend.encode_text(spec.prompt());
  std::vector<DenoisingExample> examples;
  for (const auto& img : spec.images) {
    examples.push_back({backend.encode(center_crop_resize(img, spec.image_size)), c, std::nullopt});
  }
  return finetune_full(backend, examples, schedule, spec.sgd, report);
}

}  // namespace lvg
