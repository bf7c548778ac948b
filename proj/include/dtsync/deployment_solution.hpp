#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dtsync {

// Placement and association of digital twins. Matrices are K x B, row-major,
// stored as 0/1 bytes. `association(k, m) == 1` means the twin of device k is
// hosted on the server attached to BS m; `access(k, b) == 1` means device k
// reaches the network through BS b.
struct DeploymentSolution {
  std::size_t num_devices = 0;
  std::size_t num_bs = 0;
  std::vector<std::uint8_t> host_flags;
  std::vector<std::uint8_t> association;
  std::vector<std::uint8_t> access_assoc;

  DeploymentSolution() = default;
  DeploymentSolution(std::size_t devices, std::size_t bs)
      : num_devices(devices),
        num_bs(bs),
        host_flags(bs, 0),
        association(devices * bs, 0),
        access_assoc(devices * bs, 0) {}

  std::uint8_t& assoc(std::size_t k, std::size_t m) { return association[k * num_bs + m]; }
  std::uint8_t assoc(std::size_t k, std::size_t m) const { return association[k * num_bs + m]; }
  std::uint8_t& access(std::size_t k, std::size_t b) { return access_assoc[k * num_bs + b]; }
  std::uint8_t access(std::size_t k, std::size_t b) const { return access_assoc[k * num_bs + b]; }

  // Index of the hosting server of device k, or -1 when the row is not a
  // single one-hot entry.
  int host_of(std::size_t k) const;
  int access_of(std::size_t k) const;
  // Number of twins hosted per BS (column sums of `association`).
  std::vector<int> hosted_counts() const;

  bool operator==(const DeploymentSolution&) const = default;
};

}  // namespace dtsync
