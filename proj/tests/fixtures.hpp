#pragma once

#include "mfseg/pipeline.hpp"
#include "mfseg/synthetic.hpp"
#include "scratch_dir.hpp"

/// Two flat box blobs spanning x-bands [0, 3.2] and [6.8, 10] with a
/// background band between them, zero noise.
inline mfseg::SyntheticSpec two_blob_spec() {
  using namespace mfseg;
  SyntheticSpec s;
  s.extent = DomainExtent({0, 0, 0, 0}, {10, 10, 10, 10});
  s.grid = {10, 10, 10};
  s.field_timesteps = 4;
  s.point_timesteps = 8;
  s.background_field = 0.1;
  s.background_point = 0.1;
  s.background_trajectories = 20;
  s.background_speed = 1;
  BlobSpec a;
  a.center = {1.6, 5, 5, 5};
  a.radius = {1.6, 5, 5, 5};
  a.field_value = 0.9;
  a.point_value = 0.9;
  a.trajectories = 10;
  a.shape = BlobShape::Box;
  BlobSpec b = a;
  b.center = {8.4, 5, 5, 5};
  b.field_value = 0.5;
  b.point_value = 0.5;
  s.blobs = {a, b};
  return s;
}

/// The two-blob dataset written to a scratch directory and loaded back.
struct TwoBlobFiles {
  ScratchDir data_dir{"blobs"};
  mfseg::DatasetSource source;
  mfseg::Dataset data;
  mfseg::ClusterParams params;

  TwoBlobFiles() {
    mfseg::write_synthetic(mfseg::generate_synthetic(two_blob_spec()), data_dir.path());
    source.field = data_dir / "field.json";
    source.points = data_dir / "points.csv";
    source = source.resolved();
    data = source.load();
    params.k = {3, 1, 1, 1};
    params.max_iterations = 20;
  }
};
