// SPDX-License-Identifier: Apache-2.0
//
// Catalog and cache of per-(language, accent) ASR models. Models load lazily
// (or at startup in preload mode) under a byte budget; least-recently-used
// zero-lease models are evicted to make room. Concurrent acquires of one
// unloaded key trigger exactly one load.
//
// Accounting uses declared manifest sizes, not live process measurement, so
// the budget invariant is deterministic and testable. A model being loaded
// already counts against the budget.

#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "dynasr/backend.hpp"
#include "dynasr/error.hpp"
#include "dynasr/model_key.hpp"

namespace dynasr {

struct ModelManifest {
  ModelKey key;
  std::filesystem::path artifact_path;
  uint64_t declared_size_bytes = 0;
  std::string backend_kind = "mock";  // "mock" or "external"
};

struct RegistryStats {
  uint64_t budget_bytes = 0;
  uint64_t loaded_bytes = 0;  // includes in-flight loads
  uint64_t loads = 0;
  uint64_t evictions = 0;
  uint64_t hits = 0;
  uint64_t misses = 0;

  struct LoadedEntry {
    ModelKey key;
    uint64_t size_bytes = 0;
    uint64_t last_used = 0;  // logical clock, larger = more recent
    int active_leases = 0;
  };
  std::vector<LoadedEntry> loaded;

  bool is_loaded(const ModelKey& key) const {
    for (const auto& e : loaded)
      if (e.key == key) return true;
    return false;
  }
};

class ModelRegistry;

// Lease on a loaded model. Move-only; releasing (or destroying) returns the
// lease, after which the model stays cached but becomes evictable.
class ModelHandle {
 public:
  ModelHandle() = default;
  ModelHandle(const ModelHandle&) = delete;
  ModelHandle& operator=(const ModelHandle&) = delete;
  ModelHandle(ModelHandle&& other) noexcept { swap(other); }
  ModelHandle& operator=(ModelHandle&& other) noexcept {
    if (this != &other) {
      release();
      swap(other);
    }
    return *this;
  }
  ~ModelHandle() { release(); }

  void release();  // idempotent

  bool valid() const { return registry_ != nullptr; }
  const ModelKey& key() const { return key_; }
  Recognizer& recognizer() const { return *instance_; }
  bool was_cache_hit() const { return cache_hit_; }

 private:
  friend class ModelRegistry;
  ModelHandle(ModelRegistry* reg, ModelKey key, std::shared_ptr<Recognizer> instance,
              bool cache_hit)
      : registry_(reg), key_(std::move(key)), instance_(std::move(instance)),
        cache_hit_(cache_hit) {}

  void swap(ModelHandle& other) {
    std::swap(registry_, other.registry_);
    std::swap(key_, other.key_);
    std::swap(instance_, other.instance_);
    std::swap(cache_hit_, other.cache_hit_);
  }

  ModelRegistry* registry_ = nullptr;
  ModelKey key_;
  std::shared_ptr<Recognizer> instance_;
  bool cache_hit_ = false;
};

class ModelRegistry {
 public:
  using Loader = std::function<std::shared_ptr<Recognizer>(const ModelManifest&)>;

  ModelRegistry(uint64_t budget_bytes, Loader loader)
      : budget_(budget_bytes), loader_(std::move(loader)) {}

  // Declares a model. It is not loaded until acquired (or preloaded).
  void register_model(const ModelManifest& manifest) {
    if (manifest.declared_size_bytes == 0)
      raise(Err::BadConfig, "declared_size_bytes must be > 0 for " + manifest.key.str());
    if (manifest.declared_size_bytes > budget_)
      raise(Err::ModelLargerThanBudget,
            manifest.key.str() + " declares " +
                std::to_string(manifest.declared_size_bytes) + " bytes, budget " +
                std::to_string(budget_));
    if (!std::filesystem::exists(manifest.artifact_path))
      raise(Err::ArtifactMissing, manifest.artifact_path.string());
    std::lock_guard lk(mutex_);
    if (slots_.count(manifest.key))
      raise(Err::DuplicateKey, manifest.key.str() + " already registered");
    Slot slot;
    slot.manifest = manifest;
    slot.reg_index = next_reg_index_++;
    slots_.emplace(manifest.key, std::move(slot));
  }

  // Loads each key now; leases are returned immediately.
  void preload(const std::vector<ModelKey>& keys) {
    for (const auto& key : keys) acquire(key).release();
  }

  // Returns a leased handle, loading (and evicting) as needed.
  // A hit means the model was already fully loaded when the call arrived;
  // callers that wait on an in-flight load count as misses.
  ModelHandle acquire(const ModelKey& key) {
    std::unique_lock lk(mutex_);
    bool counted_miss = false;
    for (;;) {
      auto it = slots_.find(key);
      if (it == slots_.end()) raise(Err::UnknownModel, key.str());
      Slot& slot = it->second;

      if (slot.state == SlotState::Loaded) {
        slot.last_used = ++clock_;
        slot.active_leases++;
        if (!counted_miss) hits_++;
        return ModelHandle(this, key, slot.instance, !counted_miss);
      }
      if (slot.state == SlotState::Loading) {
        if (!counted_miss) {
          misses_++;
          counted_miss = true;
        }
        cv_.wait(lk, [&] { return slot.state != SlotState::Loading; });
        continue;  // loaded: lease it above; failed: try the load ourselves
      }

      // Unloaded: make room, then load outside the lock.
      const uint64_t size = slot.manifest.declared_size_bytes;
      make_room(size);  // throws BudgetExhausted when impossible
      slot.state = SlotState::Loading;
      accounted_ += size;
      if (!counted_miss) {
        misses_++;
        counted_miss = true;
      }
      lk.unlock();

      std::shared_ptr<Recognizer> instance;
      try {
        instance = loader_(slot.manifest);
        if (!instance) raise(Err::LoadFailed, "loader returned null for " + key.str());
      } catch (const Error&) {
        lk.lock();
        slot.state = SlotState::Unloaded;
        accounted_ -= size;
        cv_.notify_all();
        throw;
      } catch (const std::exception& e) {
        lk.lock();
        slot.state = SlotState::Unloaded;
        accounted_ -= size;
        cv_.notify_all();
        raise(Err::LoadFailed, key.str() + ": " + e.what());
      }

      lk.lock();
      slot.state = SlotState::Loaded;
      slot.instance = std::move(instance);
      slot.last_used = ++clock_;
      slot.active_leases = 1;
      loads_++;
      cv_.notify_all();
      return ModelHandle(this, key, slot.instance, false);
    }
  }

  RegistryStats stats() const {
    std::lock_guard lk(mutex_);
    RegistryStats s;
    s.budget_bytes = budget_;
    s.loaded_bytes = accounted_;
    s.loads = loads_;
    s.evictions = evictions_;
    s.hits = hits_;
    s.misses = misses_;
    for (const auto& [key, slot] : slots_) {
      if (slot.state == SlotState::Loaded)
        s.loaded.push_back({key, slot.manifest.declared_size_bytes, slot.last_used,
                            slot.active_leases});
    }
    return s;
  }

  std::vector<ModelManifest> catalog() const {
    std::lock_guard lk(mutex_);
    std::vector<ModelManifest> out;
    out.reserve(slots_.size());
    for (const auto& [key, slot] : slots_) out.push_back(slot.manifest);
    return out;
  }

  uint64_t budget_bytes() const { return budget_; }

 private:
  enum class SlotState { Unloaded, Loading, Loaded };

  struct Slot {
    ModelManifest manifest;
    size_t reg_index = 0;
    SlotState state = SlotState::Unloaded;
    std::shared_ptr<Recognizer> instance;
    uint64_t last_used = 0;
    int active_leases = 0;
  };

  // Evicts LRU zero-lease models until `size` more bytes fit. Checks
  // feasibility first so nothing is evicted on a hopeless request.
  void make_room(uint64_t size) {
    uint64_t reclaimable = 0;
    for (const auto& [key, slot] : slots_)
      if (slot.state == SlotState::Loaded && slot.active_leases == 0)
        reclaimable += slot.manifest.declared_size_bytes;
    if (accounted_ + size > budget_ + reclaimable)
      raise(Err::BudgetExhausted,
            "need " + std::to_string(size) + " bytes, " +
                std::to_string(budget_ - std::min(budget_, accounted_)) +
                " free and " + std::to_string(reclaimable) + " reclaimable");

    while (accounted_ + size > budget_) {
      Slot* victim = nullptr;
      for (auto& [key, slot] : slots_) {
        if (slot.state != SlotState::Loaded || slot.active_leases > 0) continue;
        if (!victim || slot.last_used < victim->last_used ||
            (slot.last_used == victim->last_used && slot.reg_index < victim->reg_index))
          victim = &slot;
      }
      if (!victim) raise(Err::BudgetExhausted, "no evictable model");
      victim->state = SlotState::Unloaded;
      victim->instance.reset();
      accounted_ -= victim->manifest.declared_size_bytes;
      victim->last_used = 0;
      evictions_++;
    }
  }

  friend class ModelHandle;
  void release_lease(const ModelKey& key) {
    std::lock_guard lk(mutex_);
    auto it = slots_.find(key);
    if (it != slots_.end() && it->second.active_leases > 0) it->second.active_leases--;
  }

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<ModelKey, Slot> slots_;
  uint64_t budget_;
  uint64_t accounted_ = 0;
  uint64_t clock_ = 0;
  size_t next_reg_index_ = 0;
  uint64_t loads_ = 0, evictions_ = 0, hits_ = 0, misses_ = 0;
  Loader loader_;
};

inline void ModelHandle::release() {
  if (registry_) {
    registry_->release_lease(key_);
    registry_ = nullptr;
    instance_.reset();
  }
}

// Standard loader: builds the recognizer kind declared in the manifest.
inline ModelRegistry::Loader make_backend_loader(const BackendSpec& spec) {
  return [spec](const ModelManifest& manifest) -> std::shared_ptr<Recognizer> {
    if (manifest.backend_kind == "mock") {
      auto it = spec.mock_transcripts.find(manifest.key);
      return std::make_shared<MockRecognizer>(
          it == spec.mock_transcripts.end() ? std::string() : it->second);
    }
    if (manifest.backend_kind == "external") {
      if (spec.external_command.empty())
        raise(Err::LoadFailed, "no external command configured");
      return std::make_shared<ExternalRecognizer>(
          backend_detail::expand_placeholders(spec.external_command, manifest.key,
                                              manifest.artifact_path.string()),
          spec.timeout_ms);
    }
    raise(Err::LoadFailed, "unknown backend kind '" + manifest.backend_kind + "'");
  };
}

}  // namespace dynasr
