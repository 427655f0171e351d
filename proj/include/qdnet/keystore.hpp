#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace qdnet {

struct StoredKey {
    std::string key_id;
    std::vector<uint8_t> material;
    std::string peer_sae;
    double stored_at = 0.0;  // monotonic seconds
    double ttl_s = 600.0;
};

// TTL-bound key store. Expired keys are never returned and are purged so the
// store stays bounded. Thread-safe.
class KeyStore {
   public:
    explicit KeyStore(double default_ttl_s = 600.0)
        : default_ttl_s_(default_ttl_s) {}

    // Returns false (and leaves the stored key untouched) on duplicate id.
    bool insert(StoredKey key);
    bool insert(const std::string& key_id, std::vector<uint8_t> material,
                const std::string& peer_sae);

    std::optional<StoredKey> get(const std::string& key_id);
    size_t count_for_peer(const std::string& peer_sae);
    size_t size();
    void purge();

    double default_ttl_s() const { return default_ttl_s_; }

   private:
    void purge_locked(double now);

    double default_ttl_s_;
    std::mutex mutex_;
    std::map<std::string, StoredKey> keys_;
};

}  // namespace qdnet
