#pragma once

#include "ireg/speaker.hpp"
#include "ireg/training.hpp"
#include "test_util.hpp"

namespace ireg::testing {

inline SpeakerConfig tiny_config(int n_regions = 6, std::uint64_t seed = 5) {
  SpeakerConfig c;
  c.n_regions = n_regions;
  c.d_model = 16;
  c.heads = 2;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.ffn_dim = 32;
  c.max_expression_length = 6;
  c.init_seed = seed;
  return c;
}

inline WorldConfig small_world() {
  WorldConfig w;
  w.n_regions = 6;
  w.min_objects = 3;
  w.max_objects = 5;
  return w;
}

inline Scene two_ball_scene(const AttributeSchema& schema) {
  return make_scene({make_object(schema, 0, "ball", "red", "small", 0, 0),
                     make_object(schema, 1, "ball", "blue", "large", 0, 3),
                     make_object(schema, 2, "cup", "green", "medium", 3, 1)});
}

}  // namespace ireg::testing
